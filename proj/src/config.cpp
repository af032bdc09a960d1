#include "midfea/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

namespace midfea {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

Field count_field(const char* key, std::size_t RunConfig::*member, std::size_t min) {
  return {key,
          [=](RunConfig& c, const std::string& v) {
            const auto n = to_u64(key, v);
            if (n < min) throw ConfigError(std::string(key) + ": must be at least " + std::to_string(min));
            c.*member = static_cast<std::size_t>(n);
          },
          [=](const RunConfig& c) { return std::to_string(c.*member); }};
}

Field ns_count(const char* key, std::size_t ns::Hyper::*member, std::size_t min) {
  return {key,
          [=](RunConfig& c, const std::string& v) {
            const auto n = to_u64(key, v);
            if (n < min) throw ConfigError(std::string(key) + ": must be at least " + std::to_string(min));
            c.ns.*member = static_cast<std::size_t>(n);
          },
          [=](const RunConfig& c) { return std::to_string(c.ns.*member); }};
}

Field ns_weight(const char* key, double ns::Hyper::*member) {
  return {key,
          [=](RunConfig& c, const std::string& v) {
            const double x = to_double(key, v);
            if (x < 0.0) throw ConfigError(std::string(key) + ": must be non-negative");
            c.ns.*member = x;
          },
          [=](const RunConfig& c) { return fmt(c.ns.*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64("seed", v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      count_field("filters.count", &RunConfig::filters_count, 2),
      count_field("filters.size", &RunConfig::filters_size, 1),
      count_field("filters.patches", &RunConfig::filters_patches, 1),
      count_field("filters.iters", &RunConfig::filters_iters, 1),
      count_field("codebook.size", &RunConfig::codebook_size, 2),
      count_field("codebook.samples", &RunConfig::codebook_samples, 0),
      count_field("codebook.iters", &RunConfig::codebook_iters, 1),
      count_field("vq.stride", &RunConfig::vq_stride, 1),
      {"pool.partition",
       [](RunConfig& c, const std::string& v) {
         try {
           c.partition = PartitionSpec::parse(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(std::string("pool.partition: ") + e.what());
         }
       },
       [](const RunConfig& c) { return c.partition.to_string(); }},
      count_field("projection.dim", &RunConfig::projection_dim, 1),
      ns_weight("ns.alpha", &ns::Hyper::alpha),
      ns_weight("ns.beta", &ns::Hyper::beta),
      ns_weight("ns.gamma", &ns::Hyper::gamma),
      ns_weight("ns.lambda", &ns::Hyper::lambda),
      ns_count("ns.d", &ns::Hyper::d, 0),
      ns_count("ns.epochs", &ns::Hyper::epochs, 1),
      ns_weight("ns.tol", &ns::Hyper::tol),
      ns_count("ns.inner", &ns::Hyper::inner_h_steps, 1),
      {"ns.init",
       [](RunConfig& c, const std::string& v) {
         try {
           c.ns.init = ns::parse_init_mode(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(std::string("ns.init: ") + e.what());
         }
       },
       [](const RunConfig& c) { return ns::to_string(c.ns.init); }},
      {"ns.analytic_d", [](RunConfig& c, const std::string& v) { c.ns.analytic_d = to_bool("ns.analytic_d", v); },
       [](const RunConfig& c) { return std::string(c.ns.analytic_d ? "true" : "false"); }},
      {"clf.reg",
       [](RunConfig& c, const std::string& v) {
         const double x = to_double("clf.reg", v);
         if (!(x > 0.0)) throw ConfigError("clf.reg: must be positive");
         c.clf_reg = x;
       },
       [](const RunConfig& c) { return fmt(c.clf_reg); }},
      count_field("clf.epochs", &RunConfig::clf_epochs, 1),
  };
  return table;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  std::map<std::string, const Field*> index;
  for (const auto& f : fields()) index[f.key] = &f;

  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = index.find(key);
    if (it == index.end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    it->second->set(cfg, value);
  }
  if (cfg.projection_dim == 0) throw ConfigError("projection.dim must be positive");
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << serialize();
}

bool operator==(const RunConfig& a, const RunConfig& b) { return a.serialize() == b.serialize(); }

}  // namespace midfea
