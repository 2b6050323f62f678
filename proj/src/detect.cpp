#include "bevbench/detect.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bevbench::detect {

using bevpipe::BEVGrid;

void DetectorParams::validate() const {
  if (!(peak_threshold > 0.0 && nms_radius > 0.0 && cluster_radius > 0.0 &&
        min_cluster_cells > 0 && score_scale > 0.0))
    throw std::invalid_argument("DetectorParams: all parameters must be positive");
  if (class_priors.empty()) throw std::invalid_argument("DetectorParams: no class priors");
}

std::vector<ClassPrior> default_class_priors() {
  return {{"car", 1.7}, {"pedestrian", 1.8}, {"truck", 3.0}, {"barrier", 1.1}};
}

namespace {

bool is_occupancy_channel(const std::string& name) {
  const auto ends_with = [&name](const char* suffix) {
    const size_t n = std::strlen(suffix);
    return name.size() >= n && name.compare(name.size() - n, n, suffix) == 0;
  };
  return ends_with("point_count") || ends_with("occupancy");
}

// Sum of the occupancy-bearing channels, before smoothing.
std::vector<double> occupancy_field(const BEVGrid& bev) {
  std::vector<int> occ;
  for (int c = 0; c < bev.channels; ++c)
    if (is_occupancy_channel(bev.channel_names[c])) occ.push_back(c);
  if (occ.empty()) throw std::invalid_argument("center_heatmap: no occupancy-bearing channel");

  const int nx = bev.spec.nx(), ny = bev.spec.ny();
  std::vector<double> field(static_cast<size_t>(nx) * ny, 0.0);
  for (size_t cell = 0; cell < field.size(); ++cell) {
    const double* src = &bev.data[cell * bev.channels];
    double s = 0.0;
    for (int c : occ) s += src[c];
    field[cell] = s;
  }
  return field;
}

}  // namespace

std::vector<double> center_heatmap(const BEVGrid& bev, Exec exec) {
  return box_smooth(occupancy_field(bev), bev.spec.nx(), bev.spec.ny(), 1, 1, exec);
}

namespace {

struct Peak {
  int x, y;
  double value;
};

}  // namespace

std::vector<Detection> extract_detections(const BEVGrid& bev,
                                          const std::vector<double>& heatmap,
                                          const DetectorParams& params) {
  params.validate();
  const int nx = bev.spec.nx(), ny = bev.spec.ny();
  if (heatmap.size() != static_cast<size_t>(nx) * ny)
    throw std::invalid_argument("extract_detections: heatmap shape mismatch");
  const double rx = bev.spec.rx, ry = bev.spec.ry;

  const std::vector<double> mass = occupancy_field(bev);

  // Class channels, in prior (tie-break) order.
  std::vector<int> class_ch(params.class_priors.size(), -1);
  for (size_t k = 0; k < params.class_priors.size(); ++k) {
    const std::string suffix = "class/" + params.class_priors[k].name;
    for (int c = 0; c < bev.channels; ++c) {
      const std::string& name = bev.channel_names[c];
      if (name.size() >= suffix.size() &&
          name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
        class_ch[k] = c;
    }
  }

  // Strict local maxima at or above threshold.
  std::vector<Peak> peaks;
  for (int x = 0; x < nx; ++x) {
    for (int y = 0; y < ny; ++y) {
      const double v = heatmap[static_cast<size_t>(x) * ny + y];
      if (!(v >= params.peak_threshold)) continue;
      bool strict_max = true;
      for (int dx = -1; dx <= 1 && strict_max; ++dx) {
        for (int dy = -1; dy <= 1; ++dy) {
          if (dx == 0 && dy == 0) continue;
          const int i = x + dx, j = y + dy;
          if (i < 0 || i >= nx || j < 0 || j >= ny) continue;
          if (heatmap[static_cast<size_t>(i) * ny + j] >= v) {
            strict_max = false;
            break;
          }
        }
      }
      if (strict_max) peaks.push_back({x, y, v});
    }
  }
  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    if (a.value != b.value) return a.value > b.value;
    if (a.x != b.x) return a.x < b.x;
    return a.y < b.y;
  });

  // Greedy radial NMS.
  std::vector<Peak> kept;
  for (const Peak& p : peaks) {
    bool suppressed = false;
    for (const Peak& q : kept) {
      const double d = std::hypot((p.x - q.x) * rx, (p.y - q.y) * ry);
      if (d <= params.nms_radius) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(p);
  }

  const int reach_x = static_cast<int>(std::ceil(params.cluster_radius / rx));
  const int reach_y = static_cast<int>(std::ceil(params.cluster_radius / ry));

  std::vector<Detection> dets;
  for (const Peak& p : kept) {
    // Positive-mass cells within cluster_radius of the peak cell center.
    std::vector<int> cxs, cys;
    std::vector<double> cms;
    for (int x = std::max(p.x - reach_x, 0); x <= std::min(p.x + reach_x, nx - 1); ++x) {
      for (int y = std::max(p.y - reach_y, 0); y <= std::min(p.y + reach_y, ny - 1); ++y) {
        const double m = mass[static_cast<size_t>(x) * ny + y];
        if (!(m > 0.0)) continue;
        if (std::hypot((x - p.x) * rx, (y - p.y) * ry) > params.cluster_radius) continue;
        cxs.push_back(x);
        cys.push_back(y);
        cms.push_back(m);
      }
    }
    if (static_cast<int>(cms.size()) < params.min_cluster_cells) continue;

    double total = 0.0, mx = 0.0, my = 0.0;
    for (size_t i = 0; i < cms.size(); ++i) {
      total += cms[i];
      mx += cms[i] * bev.spec.center_x(cxs[i]);
      my += cms[i] * bev.spec.center_y(cys[i]);
    }
    mx /= total;
    my /= total;

    // Mass-weighted second moments about the centroid.
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (size_t i = 0; i < cms.size(); ++i) {
      const double dx = bev.spec.center_x(cxs[i]) - mx;
      const double dy = bev.spec.center_y(cys[i]) - my;
      sxx += cms[i] * dx * dx;
      syy += cms[i] * dy * dy;
      sxy += cms[i] * dx * dy;
    }
    sxx /= total;
    syy /= total;
    sxy /= total;
    // Major principal axis of the 2x2 moment matrix; isotropic clusters
    // deterministically fall back to the x axis (atan2(0, 0) = 0).
    const double axis_angle = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
    // Box convention puts the length axis along +y at yaw 0.
    const double yaw = fold_axis_angle(axis_angle - 0.5 * M_PI);

    const double ca = std::cos(axis_angle), sa = std::sin(axis_angle);
    double lo_maj = 0.0, hi_maj = 0.0, lo_min = 0.0, hi_min = 0.0;
    for (size_t i = 0; i < cms.size(); ++i) {
      const double dx = bev.spec.center_x(cxs[i]) - mx;
      const double dy = bev.spec.center_y(cys[i]) - my;
      const double along = dx * ca + dy * sa;
      const double across = -dx * sa + dy * ca;
      lo_maj = std::min(lo_maj, along);
      hi_maj = std::max(hi_maj, along);
      lo_min = std::min(lo_min, across);
      hi_min = std::max(hi_min, across);
    }
    const double length = (hi_maj - lo_maj) + rx;  // pad by one cell pitch
    const double width = (hi_min - lo_min) + ry;

    // Class from summed class channels over the cluster; ties (including the
    // no-class-channel case) resolve to the lowest class index.
    size_t best_class = 0;
    double best_sum = -1.0;
    for (size_t k = 0; k < params.class_priors.size(); ++k) {
      double s = 0.0;
      if (class_ch[k] >= 0)
        for (size_t i = 0; i < cms.size(); ++i)
          s += bev.data[(static_cast<size_t>(cxs[i]) * ny + cys[i]) * bev.channels +
                        class_ch[k]];
      if (s > best_sum) {
        best_sum = s;
        best_class = k;
      }
    }
    const ClassPrior& prior = params.class_priors[best_class];

    Detection det;
    det.center = Vec2(mx, my);
    det.z = 0.5 * prior.height;
    det.size = Vec3(width, length, prior.height);
    det.yaw = yaw;
    det.velocity = Vec2::Zero();
    det.class_label = prior.name;
    det.score = 1.0 - std::exp(-p.value / params.score_scale);
    dets.push_back(std::move(det));
  }

  // kept[] is already in (value desc, cell index) order and the score is a
  // monotone function of the peak value, so dets is sorted as contracted.
  return dets;
}

// ---------------------------------------------------------------------------
// JSON

std::string detections_to_json(const std::vector<Detection>& dets) {
  nlohmann::json j;
  j["format"] = "bevbench-dets/1";
  nlohmann::json arr = nlohmann::json::array();
  for (const Detection& d : dets) {
    arr.push_back(nlohmann::json{{"center", {d.center.x(), d.center.y(), d.z}},
                                 {"size", {d.size.x(), d.size.y(), d.size.z()}},
                                 {"yaw", d.yaw},
                                 {"velocity", {d.velocity.x(), d.velocity.y()}},
                                 {"class", d.class_label},
                                 {"score", d.score}});
  }
  j["detections"] = std::move(arr);
  return j.dump(2);
}

std::vector<Detection> detections_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("format", "") != "bevbench-dets/1")
    throw std::runtime_error("detections JSON: unexpected format tag");
  std::vector<Detection> dets;
  for (const nlohmann::json& jd : j.at("detections")) {
    Detection d;
    d.center = Vec2(jd.at("center").at(0), jd.at("center").at(1));
    d.z = jd.at("center").at(2);
    d.size = Vec3(jd.at("size").at(0), jd.at("size").at(1), jd.at("size").at(2));
    d.yaw = jd.at("yaw");
    d.velocity = Vec2(jd.at("velocity").at(0), jd.at("velocity").at(1));
    d.class_label = jd.at("class");
    d.score = jd.at("score");
    dets.push_back(std::move(d));
  }
  return dets;
}

void save_detections(const std::string& path, const std::vector<Detection>& dets) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << detections_to_json(dets) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<Detection> load_detections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open detections file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return detections_from_json(buf.str());
}

}  // namespace bevbench::detect
