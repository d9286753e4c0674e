#include <cmath>
#include <nlohmann/json.hpp>

#include "pirbn/error.hpp"
#include "pirbn/model.hpp"

namespace pirbn {

using nlohmann::json;

namespace {

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string to_json(const Network& net) {
  json doc;
  if (const auto* p = std::get_if<Pirbn>(&net)) {
    doc["type"] = "pirbn";
    doc["kind"] = std::string(to_string(p->kind()));
    doc["dim"] = p->dim();
    doc["width"] = p->width();
    if (p->grid()) {
      doc["grid"] = {{"lower", p->grid()->lower}, {"upper", p->grid()->upper}, {"count", p->grid()->count}};
    }
    json centers = json::array();
    for (Eigen::Index i = 0; i < p->centers().rows(); ++i) {
      centers.push_back(to_vec(p->centers().row(i).transpose()));
    }
    doc["centers"] = std::move(centers);
    if (std::isfinite(p->support_cutoff())) doc["support_cutoff"] = p->support_cutoff();
    doc["a"] = to_vec(p->a());
    doc["b"] = to_vec(p->b());
  } else {
    const auto& f = std::get<Fnn>(net);
    doc["type"] = "fnn";
    doc["dim"] = f.dim();
    doc["widths"] = f.widths();
    doc["parameters"] = to_vec(f.parameters());
  }
  return doc.dump(1);
}

Network network_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("network JSON: ") + e.what());
  }
  try {
    const std::string type = doc.at("type").get<std::string>();
    if (type == "pirbn") {
      const int width = doc.at("width").get<int>();
      const int dim = doc.at("dim").get<int>();
      const auto rows = doc.at("centers").get<std::vector<std::vector<double>>>();
      if (static_cast<int>(rows.size()) != width) throw ConfigError("network JSON: centre count differs from width");
      Eigen::MatrixXd c(width, dim);
      for (int i = 0; i < width; ++i) {
        if (static_cast<int>(rows[i].size()) != dim) throw ConfigError("network JSON: centre dimension mismatch");
        for (int k = 0; k < dim; ++k) c(i, k) = rows[i][k];
      }
      Pirbn net(rbf_kind_from_string(doc.at("kind").get<std::string>()), std::move(c),
                from_vec(doc.at("a").get<std::vector<double>>()), from_vec(doc.at("b").get<std::vector<double>>()));
      if (doc.contains("support_cutoff")) net.set_support_cutoff(doc["support_cutoff"].get<double>());
      if (doc.contains("grid")) {
        const auto& g = doc["grid"];
        net.set_grid({g.at("lower").get<std::vector<double>>(), g.at("upper").get<std::vector<double>>(),
                      g.at("count").get<std::vector<int>>()});
      }
      return net;
    }
    if (type == "fnn") {
      Fnn net(doc.at("widths").get<std::vector<int>>());
      const auto theta = doc.at("parameters").get<std::vector<double>>();
      net.set_parameters(theta);
      return net;
    }
    throw ConfigError("network JSON: unknown type '" + type + "'");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("network JSON: ") + e.what());
  }
}

}  // namespace pirbn
