#include "kelp/kernel.hpp"

#include <charconv>
#include <sstream>
#include <vector>

namespace kelp {

namespace {

// shortest text that parses back to the same double
std::string shortest(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

}  // namespace

KernelSpec::KernelSpec(Variant v) : v_(std::move(v)) {
  if (auto* g = std::get_if<kernels::Gaussian>(&v_))
    require(g->gamma > 0.0, "gaussian kernel: gamma must be positive");
  if (auto* poly = std::get_if<kernels::Polynomial>(&v_)) {
    require(poly->degree >= 1, "polynomial kernel: degree must be at least 1");
    require(poly->offset >= 0.0, "polynomial kernel: offset must be nonnegative");
  }
}

KernelSpec KernelSpec::parse(const std::string& token) {
  std::vector<std::string> parts;
  std::stringstream ss(token);
  std::string part;
  while (std::getline(ss, part, ':')) parts.push_back(part);
  require(!parts.empty(), "kernel: empty specification");
  const std::string& name = parts[0];
  if (name == "linear" && parts.size() == 1) return linear();
  if (name == "baseline" && parts.size() == 1) return baseline();
  if (name == "gaussian" && parts.size() == 2) return gaussian(parse_double(parts[1]));
  if (name == "poly" && parts.size() == 3) {
    const double deg = parse_double(parts[1]);
    require(deg == static_cast<int>(deg), "polynomial kernel: degree must be an integer");
    return polynomial(static_cast<int>(deg), parse_double(parts[2]));
  }
  throw Error("kernel: cannot parse '" + token +
              "' (expected linear | gaussian:<gamma> | poly:<degree>:<offset> | baseline)");
}

std::string KernelSpec::to_string() const {
  return std::visit(
      [](const auto& k) -> std::string {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, kernels::Linear>) {
          return "linear";
        } else if constexpr (std::is_same_v<K, kernels::Gaussian>) {
          return "gaussian:" + shortest(k.gamma);
        } else if constexpr (std::is_same_v<K, kernels::Polynomial>) {
          return "poly:" + std::to_string(k.degree) + ":" + shortest(k.offset);
        } else {
          return "baseline";
        }
      },
      v_);
}

}  // namespace kelp
