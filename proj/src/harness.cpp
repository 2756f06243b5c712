#include "spdelab/harness.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "spdelab/error.hpp"
#include "spdelab/regularity.hpp"
#include "spdelab/rng.hpp"

namespace spdelab {

namespace {

constexpr std::string_view kVersion = "1.0.0";
constexpr double kMemoryCapBytes = 2.0 * 1024 * 1024 * 1024;

[[noreturn]] void invalid(const std::string& what) { throw Error("harness", "invalid-config", what); }

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Shortest text that reads back to the same double.
std::string fmt(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) {
    throw std::invalid_argument("expected a number, got '" + s + "'");
  }
  return v;
}

template <class Int>
Int to_int(const std::string& s) {
  Int v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw std::invalid_argument("expected an integer, got '" + s + "'");
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

std::vector<double> to_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(to_double(item));
  return out;
}

std::vector<int> to_ints(const std::string& s) {
  std::vector<int> out;
  for (const auto& item : split_list(s)) out.push_back(to_int<int>(item));
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

struct Field {
  const char* section;
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define SPDELAB_DOUBLE(sec, name, member)                                          \
  Field {                                                                          \
    sec, name, [](ExperimentConfig& c, const std::string& v) { c.member = to_double(v); }, \
        [](const ExperimentConfig& c) { return fmt(c.member); }                   \
  }
#define SPDELAB_INT(sec, name, member, type)                                                \
  Field {                                                                                   \
    sec, name, [](ExperimentConfig& c, const std::string& v) { c.member = to_int<type>(v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.member); }                 \
  }
#define SPDELAB_LIST(sec, name, member, parse)                                         \
  Field {                                                                              \
    sec, name, [](ExperimentConfig& c, const std::string& v) { c.member = parse(v); }, \
        [](const ExperimentConfig& c) { return join(c.member); }                      \
  }
#define SPDELAB_BOOL(sec, name, member)                                                  \
  Field {                                                                                \
    sec, name, [](ExperimentConfig& c, const std::string& v) { c.member = to_bool(v); }, \
        [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); } \
  }
#define SPDELAB_OPTIONAL(sec, name, member)                                        \
  Field {                                                                          \
    sec, name,                                                                     \
        [](ExperimentConfig& c, const std::string& v) {                            \
          c.member = v == "auto" ? std::optional<double>{} : to_double(v);         \
        },                                                                         \
        [](const ExperimentConfig& c) { return c.member ? fmt(*c.member) : std::string("auto"); } \
  }
#define SPDELAB_STRING(sec, name, member)                                         \
  Field {                                                                         \
    sec, name, [](ExperimentConfig& c, const std::string& v) { c.member = v; }, \
        [](const ExperimentConfig& c) { return c.member; }                       \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"kernel", "family",
       [](ExperimentConfig& c, const std::string& v) { c.kernel_family = parse_kernel_family(v); },
       [](const ExperimentConfig& c) { return std::string(to_string(c.kernel_family)); }},
      SPDELAB_DOUBLE("kernel", "amplitude", kernel_amplitude),
      SPDELAB_DOUBLE("kernel", "sigma", kernel_sigma),
      SPDELAB_STRING("kernel", "table", kernel_table),

      SPDELAB_DOUBLE("grid", "t_max", grid.t_max),
      SPDELAB_INT("grid", "n_t", grid.n_t, int),
      SPDELAB_DOUBLE("grid", "x_min", grid.x_min),
      SPDELAB_DOUBLE("grid", "x_max", grid.x_max),
      SPDELAB_INT("grid", "n_x", grid.n_x, int),

      {"mu", "family", [](ExperimentConfig& c, const std::string& v) { c.mu_family = parse_initial_family(v); },
       [](const ExperimentConfig& c) { return std::string(to_string(c.mu_family)); }},
      SPDELAB_LIST("mu", "params", mu_params, to_doubles),
      SPDELAB_STRING("mu", "table", mu_table),

      SPDELAB_INT("mc", "n_paths", n_paths, std::size_t),
      SPDELAB_INT("mc", "n_env_replicas", n_env_replicas, std::size_t),
      SPDELAB_BOOL("mc", "antithetic", antithetic),
      SPDELAB_INT("mc", "samples", samples, std::size_t),
      SPDELAB_INT("mc", "env_paths", env_paths, std::size_t),

      {"scheme", "derivative_form",
       [](ExperimentConfig& c, const std::string& v) {
         if (v == "exponential") {
           c.form = DerivativeForm::Exponential;
         } else if (v == "euler") {
           c.form = DerivativeForm::Euler;
         } else {
           throw std::invalid_argument("derivative_form is exponential or euler");
         }
       },
       [](const ExperimentConfig& c) {
         return std::string(c.form == DerivativeForm::Euler ? "euler" : "exponential");
       }},
      SPDELAB_DOUBLE("scheme", "nu", nu),
      {"scheme", "tail",
       [](ExperimentConfig& c, const std::string& v) {
         if (v == "upper") {
           c.tail = TailForm::Upper;
         } else if (v == "nearest") {
           c.tail = TailForm::Nearest;
         } else {
           throw std::invalid_argument("tail is upper or nearest");
         }
       },
       [](const ExperimentConfig& c) { return std::string(c.tail == TailForm::Nearest ? "nearest" : "upper"); }},
      {"scheme", "readout",
       [](ExperimentConfig& c, const std::string& v) {
         if (v == "cell") {
           c.readout = DensityReadout::CellAverage;
         } else if (v == "node") {
           c.readout = DensityReadout::Node;
         } else {
           throw std::invalid_argument("readout is cell or node");
         }
       },
       [](const ExperimentConfig& c) {
         return std::string(c.readout == DensityReadout::Node ? "node" : "cell");
       }},
      SPDELAB_DOUBLE("scheme", "source_cutoff", source_cutoff),
      SPDELAB_INT("scheme", "density_budget", density_budget, std::size_t),
      SPDELAB_BOOL("scheme", "branching_noise", branching_noise),

      SPDELAB_DOUBLE("experiment", "r", r),
      SPDELAB_DOUBLE("experiment", "x", x),
      SPDELAB_DOUBLE("experiment", "t", t),
      SPDELAB_LIST("experiment", "y", y, to_doubles),
      SPDELAB_OPTIONAL("experiment", "base_time", base_time),
      SPDELAB_OPTIONAL("experiment", "center", center),
      SPDELAB_LIST("experiment", "time_lags", time_lags, to_ints),
      SPDELAB_LIST("experiment", "space_lags", space_lags, to_ints),
      SPDELAB_LIST("experiment", "orders", orders, to_ints),
      SPDELAB_LIST("experiment", "spans", spans, to_doubles),
      SPDELAB_DOUBLE("experiment", "s_time", s_time),
      SPDELAB_LIST("experiment", "diff_lags", diff_lags, to_doubles),
      SPDELAB_LIST("experiment", "ladder", ladder, to_doubles),
      SPDELAB_DOUBLE("experiment", "margin", margin),
      SPDELAB_DOUBLE("experiment", "tolerance", tolerance),
      SPDELAB_INT("experiment", "output_stride", output_stride, int),

      SPDELAB_INT("rng", "seed", seed, std::uint64_t),

      SPDELAB_INT("run", "workers", workers, int),
      SPDELAB_STRING("run", "out_dir", out_dir),
  };
  return table;
}

#undef SPDELAB_DOUBLE
#undef SPDELAB_INT
#undef SPDELAB_LIST
#undef SPDELAB_BOOL
#undef SPDELAB_STRING
#undef SPDELAB_OPTIONAL

bool on_grid(const GridSpec& g, double t) {
  const double k = t / g.dt();
  return std::abs(k - std::round(k)) < 1e-9 * std::max(1.0, std::abs(k)) && t >= -1e-12 && t <= g.t_max + 1e-12;
}

int index_of(const GridSpec& g, double t) { return static_cast<int>(std::llround(t / g.dt())); }

int base_index(const ExperimentConfig& c) {
  return c.base_time ? index_of(c.grid, *c.base_time) : c.grid.n_t / 2;
}

int center_node(const ExperimentConfig& c) {
  return c.center ? c.grid.nearest_node(*c.center) : c.grid.n_x / 2;
}

std::vector<double> query_points(const ExperimentConfig& c) {
  if (!c.y.empty()) return c.y;
  std::vector<double> ys;
  for (int k = 0; k <= 20; ++k) ys.push_back(c.x + (3 * k - 30) / 10.0);
  return ys;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  std::map<std::string, const Field*> index;
  for (const auto& f : fields()) index[std::string(f.section) + "." + f.key] = &f;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  auto parse_error = [&](const std::string& what) {
    throw Error("harness", "parse-error", "line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') parse_error("unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      static const std::vector<std::string> known = {"kernel", "grid", "mu",  "mc",
                                                     "scheme", "experiment", "rng", "run"};
      if (std::find(known.begin(), known.end(), section) == known.end()) parse_error("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) parse_error("expected key = value");
    if (section.empty()) parse_error("key outside of a section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = index.find(section + "." + key);
    if (it == index.end()) parse_error("unknown key '" + key + "' in [" + section + "]");
    try {
      it->second->set(c, value);
    } catch (const Error& e) {
      parse_error(section + "." + key + ": " + e.what());
    } catch (const std::exception& e) {
      parse_error(section + "." + key + ": " + e.what());
    }
  }
  if (!base_dir.empty()) {
    auto resolve = [&](std::string& p) {
      if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base_dir / p).lexically_normal().string();
    };
    resolve(c.kernel_table);
    resolve(c.mu_table);
  }
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("harness", "io-error", "cannot read config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path());
}

std::string serialize(const ExperimentConfig& config) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(config) + "\n";
  }
  return out;
}

void validate(const ExperimentConfig& c) {
  const GridSpec& g = c.grid;
  try {
    g.validate();
  } catch (const Error& e) {
    invalid(std::string("grid: ") + e.what());
  }
  if (c.workers < 1) invalid("workers must be positive");
  if (c.out_dir.empty()) invalid("run.out_dir must not be empty");
  if (c.output_stride < 1) invalid("output_stride must be positive");
  if (c.kernel_family == KernelFamily::GaussianBump && !(c.kernel_sigma > 0.0)) invalid("kernel.sigma must be positive");
  if (c.kernel_family == KernelFamily::Tabulated && c.kernel_table.empty()) invalid("kernel.table is required for tabulated kernels");
  if (c.mu_family == InitialFamily::Tabulated && c.mu_table.empty()) invalid("mu.table is required for tabulated mu");
  if (c.mu_family != InitialFamily::Tabulated && c.mu_params.size() != 3) invalid("mu.params needs three values");
  if (c.n_paths < 2) invalid("mc.n_paths must be at least 2");
  if (c.antithetic && c.n_paths % 2 != 0) invalid("mc.n_paths must be even with antithetic pairs");
  if (c.n_env_replicas < 1) invalid("mc.n_env_replicas must be positive");
  if (c.samples < 2) invalid("mc.samples must be at least 2");
  if (c.env_paths < 4 || c.env_paths % 4 != 0) invalid("mc.env_paths must be a positive multiple of 4");
  if (c.nu < 0.0) invalid("scheme.nu must be non-negative");
  if (!(c.source_cutoff >= 0.0)) invalid("scheme.source_cutoff must be non-negative");

  const double nu = diffusion(c);
  const double ratio = nu * g.dt() / (g.dy() * g.dy());
  if (ratio > 0.25 + 1e-12) {
    invalid("cfl-violation: nu dt / dy^2 = " + fmt(ratio) + " > 1/4; raise n_t or lower n_x");
  }
  const double cells = static_cast<double>(g.n_t + 1) * g.n_x;
  const double bytes = cells * 8.0 * (4.0 * c.workers + 6.0);
  if (bytes > kMemoryCapBytes) {
    invalid("memory-cap: about " + fmt(std::round(bytes / 1048576.0)) + " MiB needed, cap is 2048 MiB");
  }

  if (c.orders.empty()) invalid("experiment.orders must not be empty");
  for (int o : c.orders) {
    if (o != 2 && o != 4) invalid("moment orders are 2 or 4");
  }
  if (c.time_lags.size() < 3 || c.space_lags.size() < 3) invalid("insufficient-lags: holder experiments need 3 lags");
  if (c.spans.size() < 3 || c.diff_lags.size() < 3) invalid("insufficient-lags: the lemma suite needs 3 spans and 3 lags");
  if (c.ladder.empty()) invalid("experiment.ladder must not be empty");
}

void validate(const ExperimentConfig& c, std::string_view subcommand) {
  validate(c);
  const GridSpec& g = c.grid;
  const std::string sub(subcommand);
  auto time_on_grid = [&](double t, const std::string& name) {
    if (!on_grid(g, t)) invalid(name + " = " + fmt(t) + " is not a time node of the grid");
  };
  if (sub == "oracle" || sub == "density") {
    time_on_grid(c.r, "experiment.r");
    time_on_grid(c.t, "experiment.t");
    if (!(c.r < c.t)) invalid("experiment.r must be below experiment.t");
  }
  if (sub == "moments" || sub == "holder-time" || sub == "holder-space") {
    if (c.base_time) time_on_grid(*c.base_time, "experiment.base_time");
    if (2 * base_index(c) < g.n_t) invalid("experiment.base_time must be at least t_max / 2");
    for (int l : c.time_lags) {
      if (l <= 0 || base_index(c) + l > g.n_t) invalid("time lag " + std::to_string(l) + " runs past the grid");
    }
    for (int l : c.space_lags) {
      if (l <= 0 || center_node(c) + l >= g.n_x) invalid("space lag " + std::to_string(l) + " runs past the grid");
    }
    if (c.n_env_replicas < 2) invalid("mc.n_env_replicas must be at least 2 for holder experiments");
  }
  if (sub == "lemmas") {
    for (double s : c.spans) time_on_grid(s, "experiment.spans");
    time_on_grid(c.s_time, "experiment.s_time");
    for (double l : c.diff_lags) time_on_grid(c.s_time + l, "experiment.s_time + diff_lags");
  }
}

std::vector<std::string> config_warnings(const ExperimentConfig& config) {
  return config.grid.margin_warnings(make_kernel(config));
}

SmoothingKernel make_kernel(const ExperimentConfig& c) {
  switch (c.kernel_family) {
    case KernelFamily::Zero: return SmoothingKernel::zero();
    case KernelFamily::GaussianBump: return SmoothingKernel::gaussian_bump(c.kernel_amplitude, c.kernel_sigma);
    case KernelFamily::Tabulated: return SmoothingKernel::load_table(c.kernel_table);
  }
  return SmoothingKernel::zero();
}

InitialDensity make_mu(const ExperimentConfig& c) {
  if (c.mu_family != InitialFamily::Tabulated) return InitialDensity::make(c.grid, c.mu_family, c.mu_params);
  std::ifstream in(c.mu_table);
  if (!in) throw Error("harness", "io-error", "cannot read mu table '" + c.mu_table + "'");
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    const std::string s = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (!s.empty()) values.push_back(to_double(s));
  }
  return InitialDensity::tabulated(c.grid, std::move(values));
}

double diffusion(const ExperimentConfig& c) {
  if (c.nu > 0.0) return c.nu;
  if (c.kernel_family == KernelFamily::Tabulated) return default_diffusion(make_kernel(c), c.grid);
  if (c.kernel_family == KernelFamily::Zero) return 0.5;
  if (!(c.kernel_sigma > 0.0)) return 0.5;
  return default_diffusion(make_kernel(c), c.grid);
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {"oracle",       "density",      "moments",   "lemmas",    "holder-time",
                                                 "holder-space", "evolve-fd",    "evolve-conv", "crosscheck"};
  return names;
}

std::string_view version() { return kVersion; }

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : serialize(config)) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
  std::string out;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    out += buf;
  }
  return out;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Output files of one run, all under out_dir.
class Outputs {
 public:
  explicit Outputs(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& body) {
    std::ofstream out(dir_ / name, std::ios::binary);
    out << body;
    if (!out) throw Error("harness", "io-error", "cannot write '" + (dir_ / name).string() + "'");
    files_.emplace_back(name, body);
  }

  const std::vector<std::pair<std::string, std::string>>& files() const { return files_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

class Csv {
 public:
  explicit Csv(std::initializer_list<const char*> header) {
    bool first = true;
    for (const char* h : header) {
      if (!first) body_ += ',';
      body_ += h;
      first = false;
    }
    body_ += '\n';
  }
  Csv& operator<<(double v) { return cell(fmt(v)); }
  Csv& operator<<(int v) { return cell(std::to_string(v)); }
  Csv& operator<<(unsigned long v) { return cell(std::to_string(v)); }
  Csv& operator<<(unsigned long long v) { return cell(std::to_string(v)); }
  Csv& operator<<(const std::string& v) {
    if (v.find_first_of(",\"\n") == std::string::npos) return cell(v);
    std::string q = "\"";
    for (char ch : v) {
      if (ch == '"') q += '"';
      q += ch;
    }
    return cell(q + "\"");
  }
  Csv& operator<<(const char* v) { return *this << std::string(v); }
  void end() {
    body_ += '\n';
    fresh_ = true;
  }
  const std::string& str() const { return body_; }

 private:
  Csv& cell(const std::string& s) {
    if (!fresh_) body_ += ',';
    body_ += s;
    fresh_ = false;
    return *this;
  }
  std::string body_;
  bool fresh_ = true;
};

std::string gp_header(const std::string& title) {
  return "set datafile separator ','\nset key autotitle columnhead\nset title '" + title + "'\n";
}

std::uint64_t seed_w(const ExperimentConfig& c) { return derive_seed(c.seed, stream_id("W")); }
std::uint64_t seed_v(const ExperimentConfig& c) { return derive_seed(c.seed, stream_id("V")); }
std::uint64_t seed_b(const ExperimentConfig& c) { return derive_seed(c.seed, stream_id("B")); }

DensityOptions density_options(const ExperimentConfig& c, std::uint64_t seed) {
  DensityOptions o;
  o.n_paths = c.n_paths;
  o.seed = seed;
  o.antithetic = c.antithetic;
  o.tail = c.tail;
  o.form = c.form;
  o.workers = c.workers;
  return o;
}

int run_oracle(const ExperimentConfig& c, Outputs& out) {
  const GridSpec& g = c.grid;
  const auto kernel = SmoothingKernel::zero();
  const auto w = SheetSample::zeros(g, stream_id("W"));
  const int r = index_of(g, c.r), t = index_of(g, c.t);
  const double span = c.t - c.r;
  const auto ys = query_points(c);
  bool ok = true;
  Csv csv{"check", "y", "measured", "expected", "std_err", "pass"};
  auto row = [&](const char* check, const std::string& y, double m, double e, double se, bool pass) {
    csv << check << y << m << e << se << (pass ? "true" : "false");
    csv.end();
    ok = ok && pass;
  };

  const auto est = density_estimate(kernel, w, r, c.x, t, ys, density_options(c, seed_b(c)));
  for (const auto& e : est) {
    const double d = e.y - c.x;
    const double exact = std::exp(-d * d / (2.0 * span)) / std::sqrt(2.0 * std::numbers::pi * span);
    row("density", fmt(e.y), e.value, exact, e.std_err, std::abs(e.value - exact) <= 3.0 * e.std_err);
  }

  auto opts = density_options(c, seed_b(c));
  const auto dual = duality_moments(kernel, w, r, c.x, t, opts);
  row("mean-delta", "", dual.mean_delta, 0.0, dual.se_delta, std::abs(dual.mean_delta) <= 3.0 * dual.se_delta);
  row("xi-delta", "", dual.mean_xi_delta, 1.0, dual.se_xi_delta,
      std::abs(dual.mean_xi_delta - 1.0) <= 3.0 * dual.se_xi_delta);

  // ||D xi_t||_H^-2 = 1 / (t - r) on every path
  double worst = 0.0, inv = 0.0;
  std::vector<double> db(static_cast<std::size_t>(t - r));
  ParticlePath path;
  for (std::size_t m = 0; m < std::min<std::size_t>(c.n_paths, 256); ++m) {
    fill_bm_increments(g, seed_b(c), stream_id(bm_stream_label(m)), r, db);
    simulate_path_into(path, kernel, w, db, r, c.x, t);
    const auto d1 = first_derivative(path, c.form, t);
    double n2 = 0.0;
    for (double v : d1) n2 += v * v * g.dt();
    inv = 1.0 / n2;
    worst = std::max(worst, std::abs(inv * span - 1.0));
  }
  row("inverse-norm", "", inv, 1.0 / span, 0.0, worst <= 1e-12);

  out.write("oracle.csv", csv.str());
  out.write("oracle.gp", gp_header("Gaussian density oracle") +
                             "plot '< grep ^density oracle.csv' using 2:3 with points title 'estimate', \\\n"
                             "     '< grep ^density oracle.csv' using 2:4 with lines title 'exact'\n");
  return ok ? 0 : 2;
}

int run_density(const ExperimentConfig& c, Outputs& out) {
  const GridSpec& g = c.grid;
  const auto kernel = make_kernel(c);
  const auto ys = query_points(c);
  const int r = index_of(g, c.r), t = index_of(g, c.t);
  Csv csv{"env_seed", "r", "x", "t", "y", "p_hat", "std_err", "n_paths"};
  for (std::size_t e = 0; e < c.n_env_replicas; ++e) {
    const LazySheet w(g, derive_seed(seed_w(c), e), "W");
    const auto est = density_estimate(kernel, w, r, c.x, t, ys, density_options(c, derive_seed(seed_b(c), e)));
    for (const auto& d : est) {
      csv << d.env_seed << c.r << c.x << c.t << d.y << d.value << d.std_err << d.n_paths;
      csv.end();
    }
  }
  out.write("density.csv", csv.str());
  out.write("density.gp", gp_header("conditional density p^W(r,x;t,y)") +
                              "set xlabel 'y'\nplot 'density.csv' using 5:6:7 with yerrorbars title 'p_hat'\n");
  return 0;
}

HolderSetup holder_setup(const ExperimentConfig& c) {
  HolderSetup h;
  h.grid = c.grid;
  h.kernel = make_kernel(c);
  h.mu = make_mu(c);
  h.nu = diffusion(c);
  h.replicas = c.n_env_replicas;
  h.seed = c.seed;
  h.workers = c.workers;
  h.base_index = base_index(c);
  h.center_node = center_node(c);
  h.time_lags = c.time_lags;
  h.space_lags = c.space_lags;
  h.orders = c.orders;
  h.margin = c.margin;
  return h;
}

int run_moments(const ExperimentConfig& c, Outputs& out) {
  const HolderSetup h = holder_setup(c);
  const auto samples = holder_samples(h);
  Csv csv{"quantity", "order", "lag", "moment", "std_err", "n"};
  for (const auto& rep : holder_moments(h, samples)) {
    for (std::size_t l = 0; l < rep.lags.size(); ++l) {
      csv << rep.label << rep.order << rep.lags[l] << rep.moments[l].moment << rep.moments[l].std_err
          << rep.moments[l].n;
      csv.end();
    }
  }
  out.write("moments.csv", csv.str());
  out.write("moments.gp", gp_header("field increment moments") +
                              "set logscale xy\nset xlabel 'lag'\n"
                              "plot '< grep ^field-time moments.csv' using 3:4 with linespoints title 'time', \\\n"
                              "     '< grep ^field-space moments.csv' using 3:4 with linespoints title 'space'\n");
  return 0;
}

int write_slopes(const std::string& stem, const std::vector<SlopeReport>& reports, Outputs& out) {
  Csv table{"order", "lag", "moment", "std_err", "n"};
  Csv summary{"order", "slope", "ci", "reference", "target", "verdict", "replicas"};
  bool violated = false;
  for (const auto& r : reports) {
    for (std::size_t l = 0; l < r.lags.size(); ++l) {
      table << r.order << r.lags[l] << r.moments[l].moment << r.moments[l].std_err << r.moments[l].n;
      table.end();
    }
    summary << r.order << r.slope << r.ci << r.reference << r.target << std::string(to_string(r.verdict))
            << r.replicas;
    summary.end();
    violated = violated || r.verdict == Verdict::Violates;
  }
  out.write(stem + ".csv", table.str());
  out.write(stem + "_summary.csv", summary.str());
  out.write(stem + ".gp", gp_header(stem + " moments") + "set logscale xy\nset xlabel 'lag'\nplot '" + stem +
                              ".csv' using 2:3 with linespoints title 'E|increment|^order'\n");
  return violated ? 2 : 0;
}

int run_holder(const ExperimentConfig& c, Outputs& out, bool time) {
  const HolderSetup h = holder_setup(c);
  const auto samples = holder_samples(h);
  return time ? write_slopes("holder_time", holder_time(h, samples), out)
              : write_slopes("holder_space", holder_space(h, samples), out);
}

int run_lemmas(const ExperimentConfig& c, Outputs& out) {
  LemmaSetup s;
  s.grid = c.grid;
  s.kernel = make_kernel(c);
  s.form = c.form;
  s.samples = c.samples;
  s.seed = c.seed;
  s.workers = c.workers;
  s.x = c.x;
  s.spans = c.spans;
  s.s_time = c.s_time;
  s.diff_lags = c.diff_lags;
  s.env_count = c.n_env_replicas;
  s.env_paths = c.env_paths;
  s.ladder = c.ladder;
  const auto rows = check_lemma_suite(s);
  Csv table{"name", "kind", "lag", "measured", "std_err", "rhs"};
  Csv summary{"name", "quantity", "kind", "slope", "ci", "reference", "tolerance", "empirical_constant", "verdict",
              "note"};
  bool violated = false;
  for (const auto& r : rows) {
    for (std::size_t l = 0; l < r.lags.size(); ++l) {
      table << r.name << r.kind << r.lags[l] << r.measured[l] << r.std_err[l];
      if (r.rhs.empty()) {
        table << "";
      } else {
        table << r.rhs[l];
      }
      table.end();
    }
    summary << r.name << r.quantity << r.kind << r.slope << r.ci << r.reference_slope << r.tolerance
            << r.empirical_constant << std::string(to_string(r.verdict)) << r.note;
    summary.end();
    violated = violated || r.verdict == Verdict::Violates;
  }
  out.write("lemmas.csv", table.str());
  out.write("lemmas_summary.csv", summary.str());
  out.write("lemmas.gp", gp_header("lemma checks") +
                             "set logscale xy\nset xlabel 'lag'\n"
                             "plot '< grep ^D1diff lemmas.csv' using 3:4 with linespoints title 'D1diff', \\\n"
                             "     '< grep ^D2diff lemmas.csv' using 3:4 with linespoints title 'D2diff', \\\n"
                             "     '< grep ^tdelta lemmas.csv' using 3:4 with linespoints title 'tdelta'\n");
  return violated ? 2 : 0;
}

std::string field_rows(const FieldState& s, int stride) {
  Csv csv{"seed_W", "seed_V", "t", "y", "X"};
  const GridSpec& g = s.grid;
  for (int i = 0; i <= s.steps; ++i) {
    if (i % stride != 0 && i != s.steps) continue;
    const auto row = s.row(i);
    for (int j = 0; j < g.n_x; ++j) {
      csv << s.seed_w << s.seed_v << g.t(i) << g.y(j) << row[static_cast<std::size_t>(j)];
      csv.end();
    }
  }
  return csv.str();
}

std::string field_gp(const std::string& csv_name) {
  return gp_header("X_t(y)") + "set xlabel 't'\nset ylabel 'y'\nset view map\nsplot '" + csv_name +
         "' using 3:4:5 with points palette pointsize 0.5 notitle\n";
}

struct Sheets {
  SheetSample w;
  SheetSample v;
};

Sheets make_sheets(const ExperimentConfig& c) {
  return {sample_sheet(c.grid, seed_w(c), "W"),
          c.branching_noise ? sample_sheet(c.grid, seed_v(c), "V") : SheetSample::zeros(c.grid, stream_id("V"))};
}

ConvolutionOptions conv_options(const ExperimentConfig& c) {
  ConvolutionOptions o;
  o.n_paths = c.n_paths;
  o.seed_b = seed_b(c);
  o.antithetic = c.antithetic;
  o.tail = TailForm::Nearest;
  o.readout = c.readout;
  o.form = c.form;
  o.density_budget = c.density_budget;
  o.source_cutoff = c.source_cutoff;
  o.workers = c.workers;
  return o;
}

int run_evolve(const ExperimentConfig& c, Outputs& out, Scheme scheme) {
  const auto kernel = make_kernel(c);
  const auto mu = make_mu(c);
  const auto sheets = make_sheets(c);
  const FieldState s = scheme == Scheme::FiniteDifference
                           ? evolve_fd(c.grid, mu, kernel, sheets.w, sheets.v, diffusion(c))
                           : evolve_convolution(kernel, sheets.w, sheets.v, mu, conv_options(c));
  out.write("fields.csv", field_rows(s, c.output_stride));
  out.write("fields.gp", field_gp("fields.csv"));
  return 0;
}

double rel_l2(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    num += (a[j] - b[j]) * (a[j] - b[j]);
    den += b[j] * b[j];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

int run_crosscheck(const ExperimentConfig& c, Outputs& out) {
  const auto kernel = make_kernel(c);
  const auto mu = make_mu(c);
  const auto sheets = make_sheets(c);
  const double nu = diffusion(c);
  const FieldState fd = evolve_fd(c.grid, mu, kernel, sheets.w, sheets.v, nu);
  const FieldState conv = evolve_convolution(kernel, sheets.w, sheets.v, mu, conv_options(c));
  const auto rel = crosscheck(conv, fd);
  Csv csv{"t", "rel_l2"};
  for (std::size_t i = 0; i < rel.size(); ++i) {
    csv << c.grid.t(static_cast<int>(i)) << rel[i];
    csv.end();
  }
  out.write("fields_fd.csv", field_rows(fd, c.output_stride));
  out.write("fields_conv.csv", field_rows(conv, c.output_stride));
  out.write("discrepancy.csv", csv.str());
  if (kernel.is_zero() && !c.branching_noise) {
    Csv heat{"t", "fd_rel_l2", "conv_rel_l2"};
    for (int i = 1; i <= c.grid.n_t; ++i) {
      const auto exact = heat_solution(mu, c.grid, c.grid.t(i), nu);
      heat << c.grid.t(i) << rel_l2(fd.row(i), exact) << rel_l2(conv.row(i), exact);
      heat.end();
    }
    out.write("heat_oracle.csv", heat.str());
  }
  out.write("discrepancy.gp", gp_header("relative L2 discrepancy, convolution vs FD") +
                                  "set xlabel 't'\nplot 'discrepancy.csv' using 1:2 with lines title 'rel_l2'\n");
  return c.tolerance > 0.0 && rel.back() > c.tolerance ? 2 : 0;
}

}  // namespace

RunResult run(std::string_view subcommand, const ExperimentConfig& config) {
  RunResult result;
  const std::string started = utc_now();
  const std::filesystem::path dir(config.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    result.exit_code = 1;
    result.error = "harness/io-error: cannot create '" + dir.string() + "': " + ec.message();
    return result;
  }
  Outputs out(dir);
  nlohmann::json error = nullptr;
  std::vector<std::string> warnings;
  try {
    validate(config, subcommand);
    warnings = config_warnings(config);
    const std::string sub(subcommand);
    if (sub == "oracle") {
      result.exit_code = run_oracle(config, out);
    } else if (sub == "density") {
      result.exit_code = run_density(config, out);
    } else if (sub == "moments") {
      result.exit_code = run_moments(config, out);
    } else if (sub == "lemmas") {
      result.exit_code = run_lemmas(config, out);
    } else if (sub == "holder-time") {
      result.exit_code = run_holder(config, out, true);
    } else if (sub == "holder-space") {
      result.exit_code = run_holder(config, out, false);
    } else if (sub == "evolve-fd") {
      result.exit_code = run_evolve(config, out, Scheme::FiniteDifference);
    } else if (sub == "evolve-conv") {
      result.exit_code = run_evolve(config, out, Scheme::Convolution);
    } else if (sub == "crosscheck") {
      result.exit_code = run_crosscheck(config, out);
    } else {
      throw Error("harness", "unknown-subcommand", "'" + sub + "'");
    }
  } catch (const Error& e) {
    result.exit_code = 1;
    result.error = e.qualified();
    error = {{"module", e.module()}, {"code", e.code()}, {"message", e.what()}};
  } catch (const std::exception& e) {
    result.exit_code = 1;
    result.error = std::string("harness/internal: ") + e.what();
    error = {{"module", "harness"}, {"code", "internal"}, {"message", e.what()}};
  }

  nlohmann::json files = nlohmann::json::array();
  for (const auto& [name, body] : out.files()) {
    files.push_back({{"name", name}, {"bytes", body.size()}, {"sha256", sha256_hex(body)}});
    result.files.push_back((dir / name).string());
  }
  nlohmann::json manifest = {
      {"tool", "spdelab"},
      {"version", std::string(kVersion)},
      {"subcommand", std::string(subcommand)},
      {"config_hash", config_hash(config)},
      {"config", serialize(config)},
      {"seed", config.seed},
      {"workers", config.workers},
      {"started", started},
      {"finished", utc_now()},
      {"exit_code", result.exit_code},
      {"status", result.exit_code == 0 ? "ok" : (result.exit_code == 2 ? "violates" : "error")},
      {"error", error},
      {"warnings", warnings},
      {"files", files},
  };
  std::ofstream mf(dir / "manifest.json");
  mf << manifest.dump(2) << '\n';
  result.files.push_back((dir / "manifest.json").string());
  return result;
}

}  // namespace spdelab
