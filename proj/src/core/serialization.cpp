#include "dpcc/core/serialization.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "dpcc/core/errors.hpp"

namespace dpcc {

namespace {

Json bound_to_json(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

double bound_from_json(const Json& j, double if_null) {
  return j.is_null() ? if_null : j.get<double>();
}

}  // namespace

Json vector_to_json(const Eigen::VectorXd& v) {
  return Json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from_json(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vector_to_json(m.row(r).transpose()));
  return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& j, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Eigen::VectorXd row = vector_from_json(j[r]);
    if (row.size() != cols) throw ConfigError("matrix row has wrong width");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

Json normalizer_to_json(const Normalizer& n) {
  return Json{{"state_lower", vector_to_json(n.state_lower())},
              {"state_upper", vector_to_json(n.state_upper())},
              {"action_lower", vector_to_json(n.action_lower())},
              {"action_upper", vector_to_json(n.action_upper())}};
}

Normalizer normalizer_from_json(const Json& j) {
  return Normalizer(vector_from_json(require(j, "state_lower", "normalizer")),
                    vector_from_json(require(j, "state_upper", "normalizer")),
                    vector_from_json(require(j, "action_lower", "normalizer")),
                    vector_from_json(require(j, "action_upper", "normalizer")));
}

Json primitive_to_json(const ConstraintPrimitive& p) {
  if (const auto* h = std::get_if<Halfspace>(&p)) {
    return Json{{"type", "halfspace"}, {"normal", vector_to_json(h->normal)}, {"offset", h->offset}};
  }
  if (const auto* b = std::get_if<Box>(&p)) {
    Json lo = Json::array(), hi = Json::array();
    for (Eigen::Index i = 0; i < b->lower.size(); ++i) {
      lo.push_back(bound_to_json(b->lower[i]));
      hi.push_back(bound_to_json(b->upper[i]));
    }
    return Json{{"type", "box"}, {"lower", lo}, {"upper", hi}};
  }
  const auto& d = std::get<AvoidDisk>(p);
  return Json{{"type", "avoid_disk"},
              {"center", {d.center[0], d.center[1]}},
              {"radius", d.radius},
              {"coords", {d.coords[0], d.coords[1]}}};
}

ConstraintPrimitive primitive_from_json(const Json& j) {
  const std::string type = require(j, "type", "constraint").get<std::string>();
  try {
    if (type == "halfspace") {
      return make_halfspace(vector_from_json(require(j, "normal", "halfspace")),
                            require(j, "offset", "halfspace").get<double>());
    }
    if (type == "box") {
      const Json& lo = require(j, "lower", "box");
      const Json& hi = require(j, "upper", "box");
      if (lo.size() != hi.size()) throw ConfigError("box bounds differ in length");
      Eigen::VectorXd l(lo.size()), u(hi.size());
      const double inf = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < lo.size(); ++i) {
        l[static_cast<Eigen::Index>(i)] = bound_from_json(lo[i], -inf);
        u[static_cast<Eigen::Index>(i)] = bound_from_json(hi[i], inf);
      }
      return make_box(l, u);
    }
    if (type == "avoid_disk") {
      const auto c = require(j, "center", "avoid_disk").get<std::vector<double>>();
      if (c.size() != 2) throw ConfigError("avoid_disk center must have two entries");
      std::array<int, 2> coords{0, 1};
      if (j.contains("coords")) {
        const auto cv = j["coords"].get<std::vector<int>>();
        if (cv.size() != 2) throw ConfigError("avoid_disk coords must have two entries");
        coords = {cv[0], cv[1]};
      }
      return make_avoid_disk(Eigen::Vector2d(c[0], c[1]), require(j, "radius", "avoid_disk").get<double>(),
                             coords);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid ") + type + ": " + e.what());
  }
  throw ConfigError("unknown constraint type '" + type + "'");
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("cannot parse '" + path.string() + "': " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j, int indent) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << j.dump(indent) << '\n';
}

const Json& require(const Json& j, const std::string& key, const std::string& what) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(what + ": missing field '" + key + "'");
  return j.at(key);
}

}  // namespace dpcc
