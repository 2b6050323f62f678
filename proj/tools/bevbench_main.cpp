#include "bevbench/harness.hpp"

int main(int argc, char** argv) { return bevbench::harness::cli(argc, argv); }
