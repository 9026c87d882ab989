#include "risklab/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

namespace risklab {

long ExperimentConfig::effective_m() const {
  if (m > 0) return m;
  return static_cast<long>(std::llround(alpha * static_cast<double>(n)));
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

struct Entry {
  std::string value;
  int line = 0;
};

class Parser {
 public:
  explicit Parser(const std::string& text) {
    static const std::set<std::string> sections = {"model", "sizes", "signal", "mc", "output"};
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      std::string line = trim(raw);
      if (line.empty() || line[0] == '#' || line[0] == ';') continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError("malformed section header", line_no);
        section = trim(line.substr(1, line.size() - 2));
        if (!sections.count(section))
          throw ConfigError("unknown section [" + section + "]", line_no);
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("expected key = value", line_no);
      if (section.empty()) throw ConfigError("key outside of any [section]", line_no);
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError("empty key", line_no);
      const std::string full = section + "." + key;
      if (entries_.count(full)) throw ConfigError("duplicate key '" + key + "'", line_no);
      entries_[full] = Entry{trim(line.substr(eq + 1)), line_no};
    }
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string get_string(const std::string& key) {
    auto& e = take(key);
    return e.value;
  }

  double get_double(const std::string& key) {
    auto& e = take(key);
    try {
      std::size_t pos = 0;
      const double v = std::stod(e.value, &pos);
      if (pos != e.value.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected a number, got '" + e.value + "'", e.line);
    }
  }

  long get_long(const std::string& key) {
    auto& e = take(key);
    try {
      std::size_t pos = 0;
      const long v = std::stol(e.value, &pos);
      if (pos != e.value.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected an integer, got '" + e.value + "'", e.line);
    }
  }

  std::uint64_t get_u64(const std::string& key) {
    auto& e = take(key);
    try {
      std::size_t pos = 0;
      const unsigned long long v = std::stoull(e.value, &pos);
      if (pos != e.value.size()) throw std::invalid_argument("");
      return static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected an unsigned integer, got '" + e.value + "'",
                        e.line);
    }
  }

  std::vector<double> get_vector(const std::string& key) {
    auto& e = take(key);
    std::vector<double> out;
    std::istringstream in(e.value);
    std::string item;
    while (std::getline(in, item, ',')) {
      item = trim(item);
      try {
        std::size_t pos = 0;
        out.push_back(std::stod(item, &pos));
        if (pos != item.size()) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected comma-separated numbers", e.line);
      }
    }
    if (out.empty()) throw ConfigError("key '" + key + "': empty vector", e.line);
    return out;
  }

  int line_of(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
  }

  void finish() const {
    for (const auto& [key, entry] : entries_)
      if (!consumed_.count(key)) throw ConfigError("unknown key '" + key + "'", entry.line);
  }

 private:
  Entry& take(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("missing required key '" + key + "'", 0);
    consumed_.insert(key);
    return it->second;
  }

  std::map<std::string, Entry> entries_;
  std::set<std::string> consumed_;
};

void constraint(bool ok, const std::string& msg, int line) {
  if (!ok) throw ConfigError(msg, line);
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  Parser p(text);
  ExperimentConfig c;

  c.model = p.get_string("model.model");
  constraint(c.model == "spectral" || c.model == "factor" || c.model == "mog",
             "model.model must be spectral, factor or mog", p.line_of("model.model"));
  c.d = static_cast<int>(p.get_long("model.d"));
  c.k = static_cast<int>(p.get_long("model.k"));
  constraint(c.d >= 1, "model.d must be positive", p.line_of("model.d"));
  if (c.model == "mog") {
    constraint(c.k >= 2, "model.k (component count) must be >= 2", p.line_of("model.k"));
    constraint(c.k <= c.d, "model.k must be <= model.d for axis centers", p.line_of("model.k"));
  } else {
    constraint(c.k >= 1 && c.k < c.d, "model.k must satisfy 1 <= k < d", p.line_of("model.k"));
  }

  if (p.has("sizes.alpha")) {
    c.alpha = p.get_double("sizes.alpha");
    constraint(c.alpha > 0.0, "sizes.alpha must be positive", p.line_of("sizes.alpha"));
  }
  if (p.has("sizes.m")) {
    c.m = p.get_long("sizes.m");
    constraint(c.m > 0, "sizes.m must be positive", p.line_of("sizes.m"));
  }
  if (p.has("sizes.n")) {
    c.n = p.get_long("sizes.n");
    constraint(c.n > 0, "sizes.n must be positive", p.line_of("sizes.n"));
  }
  if (p.has("sizes.reps")) {
    c.reps = static_cast<int>(p.get_long("sizes.reps"));
    constraint(c.reps >= 1, "sizes.reps must be >= 1", p.line_of("sizes.reps"));
  }
  if (c.model != "mog") {
    constraint(c.n > 0, "sizes.n is required for spectral/factor", 0);
    constraint(c.m > 0 || c.alpha > 0.0, "one of sizes.m or sizes.alpha is required", 0);
  }

  if (p.has("signal.sigma2")) {
    c.sigma2 = p.get_double("signal.sigma2");
    constraint(c.sigma2 > 0.0, "signal.sigma2 must be positive", p.line_of("signal.sigma2"));
  }
  if (p.has("signal.sigma_nu")) {
    c.sigma_nu = p.get_double("signal.sigma_nu");
    constraint(c.sigma_nu >= 0.0, "signal.sigma_nu must be nonnegative",
               p.line_of("signal.sigma_nu"));
  }
  if (p.has("signal.beta")) c.beta = p.get_vector("signal.beta");
  if (p.has("signal.col_norms")) c.col_norms = p.get_vector("signal.col_norms");
  if (p.has("signal.separation")) {
    c.separation = p.get_double("signal.separation");
    constraint(c.separation > 0.0, "signal.separation must be positive",
               p.line_of("signal.separation"));
  }
  if (p.has("signal.preset")) {
    c.preset = p.get_string("signal.preset");
    constraint(c.preset == "block", "signal.preset must be 'block'", p.line_of("signal.preset"));
  }
  if (c.model == "factor") {
    constraint(!c.col_norms.empty(), "signal.col_norms is required for the factor model", 0);
    constraint(static_cast<int>(c.col_norms.size()) == c.k,
               "signal.col_norms must have k entries", p.line_of("signal.col_norms"));
    if (c.beta.empty()) c.beta.assign(c.k, 1.0);
    constraint(static_cast<int>(c.beta.size()) == c.k, "signal.beta must have k entries",
               p.line_of("signal.beta"));
  }

  if (p.has("mc.seed")) c.seed = p.get_u64("mc.seed");
  if (p.has("mc.n_fisher")) c.n_fisher = p.get_long("mc.n_fisher");
  if (p.has("mc.n_proj")) c.n_proj = p.get_long("mc.n_proj");
  if (p.has("mc.n_eval")) c.n_eval = p.get_long("mc.n_eval");
  if (p.has("mc.law_mc")) c.law_mc = p.get_long("mc.law_mc");
  if (c.model == "mog") {
    constraint(c.n_fisher >= 10000, "mc.n_fisher must be >= 10000",
               p.line_of("mc.n_fisher"));
    constraint(c.n_proj >= 1000, "mc.n_proj must be >= 1000", p.line_of("mc.n_proj"));
    constraint(c.n_eval >= 1000, "mc.n_eval must be >= 1000", p.line_of("mc.n_eval"));
  }
  constraint(c.law_mc >= 1, "mc.law_mc must be positive", p.line_of("mc.law_mc"));

  if (p.has("output.path")) c.path = p.get_string("output.path");

  p.finish();
  return c;
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_vector(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += fmt_double(v[i]);
  }
  return out;
}

}  // namespace

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "[model]\n";
  out << "model = " << c.model << "\n";
  out << "d = " << c.d << "\n";
  out << "k = " << c.k << "\n";
  out << "[sizes]\n";
  if (c.alpha > 0.0) out << "alpha = " << fmt_double(c.alpha) << "\n";
  if (c.m > 0) out << "m = " << c.m << "\n";
  if (c.n > 0) out << "n = " << c.n << "\n";
  out << "reps = " << c.reps << "\n";
  out << "[signal]\n";
  out << "sigma2 = " << fmt_double(c.sigma2) << "\n";
  out << "sigma_nu = " << fmt_double(c.sigma_nu) << "\n";
  if (!c.beta.empty()) out << "beta = " << fmt_vector(c.beta) << "\n";
  if (!c.col_norms.empty()) out << "col_norms = " << fmt_vector(c.col_norms) << "\n";
  out << "separation = " << fmt_double(c.separation) << "\n";
  out << "preset = " << c.preset << "\n";
  out << "[mc]\n";
  out << "seed = " << c.seed << "\n";
  out << "n_fisher = " << c.n_fisher << "\n";
  out << "n_proj = " << c.n_proj << "\n";
  out << "n_eval = " << c.n_eval << "\n";
  out << "law_mc = " << c.law_mc << "\n";
  out << "[output]\n";
  if (!c.path.empty()) out << "path = " << c.path << "\n";
  return out.str();
}

std::uint64_t config_hash(const ExperimentConfig& c) {
  const std::string s = serialize_config(c);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace risklab
