#include "maxup/data.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "maxup/error.hpp"
#include "maxup/rng.hpp"

namespace maxup {

const char* to_string(DatasetKind k) noexcept {
  switch (k) {
    case DatasetKind::gaussian_mixture_halfspace: return "gaussian_mixture_halfspace";
    case DatasetKind::two_moons: return "two_moons";
    case DatasetKind::grid_images: return "grid_images";
    case DatasetKind::csv: return "csv";
  }
  return "?";
}

namespace {

int draw_label(RngStream& rng) { return rng.uniform() < 0.5 ? -1 : 1; }

Dataset halfspace(const DatasetSpec& spec, std::size_t n, RngStream& rng) {
  const Tensor& theta = *spec.theta_star;
  Dataset out{{}, spec.d, 0};
  out.examples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = draw_label(rng);
    Tensor x(Shape{spec.d});
    for (std::size_t j = 0; j < spec.d; ++j) x[j] = y * theta[j] + spec.noise_sigma * rng.normal();
    out.examples.push_back({std::move(x), y});
  }
  return out;
}

Dataset two_moons(const DatasetSpec& spec, std::size_t n, RngStream& rng) {
  Dataset out{{}, 2, 0};
  out.examples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = draw_label(rng);
    const double t = std::numbers::pi * rng.uniform();
    double a = std::cos(t), b = std::sin(t);
    if (y < 0) {
      a = 1.0 - a;
      b = 0.5 - b;
    }
    a += spec.noise_sigma * rng.normal();
    b += spec.noise_sigma * rng.normal();
    out.examples.push_back({Tensor::vector({a, b}), y});
  }
  return out;
}

Dataset grid_images(const DatasetSpec& spec, std::size_t n, RngStream& rng) {
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(spec.d))));
  const std::size_t shape = std::max<std::size_t>(2, side / 3);  // square side, cross arm span
  Dataset out{{}, spec.d, 0};
  out.examples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = draw_label(rng);
    Tensor x(Shape{spec.d});
    const std::size_t span = y > 0 ? shape : 2 * (shape / 2) + 1;
    const std::size_t top = rng.uniform_index(side - span + 1);
    const std::size_t left = rng.uniform_index(side - span + 1);
    for (std::size_t r = 0; r < span; ++r) {
      for (std::size_t c = 0; c < span; ++c) {
        const bool on = y > 0 || r == span / 2 || c == span / 2;
        if (on) x[(top + r) * side + left + c] = 1.0;
      }
    }
    for (double& v : x.values()) v += spec.noise_sigma * rng.normal();
    out.examples.push_back({std::move(x), y});
  }
  return out;
}

void validate(const DatasetSpec& spec) {
  if (spec.kind == DatasetKind::csv) {
    if (spec.path.empty()) throw BadSpec("csv dataset needs a path");
    return;
  }
  if (spec.d == 0) throw BadSpec("dataset dimension must be positive");
  if (!(spec.noise_sigma > 0.0)) throw BadSpec("noise_sigma must be positive");
  switch (spec.kind) {
    case DatasetKind::gaussian_mixture_halfspace: {
      if (!spec.theta_star) throw BadSpec("gaussian_mixture_halfspace needs theta_star");
      if (spec.theta_star->size() != spec.d) {
        throw BadSpec("theta_star has " + std::to_string(spec.theta_star->size()) +
                      " entries for d = " + std::to_string(spec.d));
      }
      if (norm2(spec.theta_star->values()) == 0.0) throw BadSpec("theta_star must be nonzero");
      break;
    }
    case DatasetKind::two_moons:
      if (spec.d != 2) throw BadSpec("two_moons requires d = 2");
      break;
    case DatasetKind::grid_images: {
      const auto side = std::llround(std::sqrt(static_cast<double>(spec.d)));
      if (static_cast<std::size_t>(side * side) != spec.d || side < 3) {
        throw BadSpec("grid_images requires d to be a square of at least 9");
      }
      break;
    }
    case DatasetKind::csv:
      break;
  }
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) { throw ParseError(line, what); }

std::vector<std::string_view> split_fields(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = s.find(',', start);
    out.push_back(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view field, std::size_t line) {
  field = trim(field);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    parse_fail(line, "not a number: '" + std::string(field) + "'");
  }
  if (!std::isfinite(v)) parse_fail(line, "non-finite value '" + std::string(field) + "'");
  return v;
}

}  // namespace

TrainTestSplit generate(const DatasetSpec& spec) {
  validate(spec);
  if (spec.kind == DatasetKind::csv) {
    Dataset all = load_csv(spec.path);
    TrainTestSplit split;
    if (!spec.test_path.empty()) {
      split.train = std::move(all);
      split.test = load_csv(spec.test_path, split.train.dim);
      return split;
    }
    if (spec.n_train > all.size()) {
      throw BadSpec("csv has " + std::to_string(all.size()) + " rows, n_train = " +
                    std::to_string(spec.n_train));
    }
    split.train = Dataset{{}, all.dim, all.num_classes};
    split.test = Dataset{{}, all.dim, all.num_classes};
    for (std::size_t i = 0; i < all.size(); ++i) {
      (i < spec.n_train ? split.train : split.test).examples.push_back(all.examples[i]);
    }
    return split;
  }
  auto make = [&](std::size_t n, RngStream rng) {
    switch (spec.kind) {
      case DatasetKind::two_moons: return two_moons(spec, n, rng);
      case DatasetKind::grid_images: return grid_images(spec, n, rng);
      default: return halfspace(spec, n, rng);
    }
  };
  return {make(spec.n_train, derive_stream(spec.seed, StreamPurpose::data, 0)),
          make(spec.n_test, derive_stream(spec.seed, StreamPurpose::data, 1))};
}

Dataset load_csv(const std::string& path, std::optional<std::size_t> expected_dim) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) parse_fail(1, "missing header");
  const auto header = split_fields(trim(line));
  if (header.size() < 2 || trim(header.back()) != "label") {
    parse_fail(1, "header must be f0,...,f{d-1},label");
  }
  const std::size_t d = header.size() - 1;
  for (std::size_t j = 0; j < d; ++j) {
    if (trim(header[j]) != "f" + std::to_string(j)) {
      parse_fail(1, "header field " + std::to_string(j) + " must be f" + std::to_string(j));
    }
  }
  if (expected_dim && *expected_dim != d) {
    throw DimensionMismatch(path + ": " + std::to_string(d) + " features, expected " +
                            std::to_string(*expected_dim));
  }

  Dataset out{{}, d, 0};
  std::vector<std::size_t> label_lines;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(trim(line));
    if (fields.size() != d + 1) {
      parse_fail(line_no, "expected " + std::to_string(d + 1) + " fields, found " +
                              std::to_string(fields.size()));
    }
    Tensor x(Shape{d});
    for (std::size_t j = 0; j < d; ++j) x[j] = parse_double(fields[j], line_no);
    const double label = parse_double(fields[d], line_no);
    if (label != std::round(label) || std::abs(label) > 1e6) {
      throw UnknownLabel("line " + std::to_string(line_no) + ": label " +
                         std::string(trim(fields[d])) + " is not an integer");
    }
    out.examples.push_back({std::move(x), static_cast<int>(label)});
    label_lines.push_back(line_no);
  }

  bool binary = false;
  for (const auto& e : out.examples) binary = binary || e.y == -1;
  int max_label = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int y = out.examples[i].y;
    const bool ok = binary ? (y == -1 || y == 1) : y >= 0;
    if (!ok) {
      throw UnknownLabel("line " + std::to_string(label_lines[i]) + ": label " +
                         std::to_string(y) + (binary ? " outside {-1, 1}" : " is negative"));
    }
    max_label = std::max(max_label, y);
  }
  out.num_classes = binary ? 0 : static_cast<std::size_t>(max_label) + 1;
  return out;
}

void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (std::size_t j = 0; j < data.dim; ++j) out << 'f' << j << ',';
  out << "label\n";
  char buf[32];
  for (const auto& e : data.examples) {
    for (double v : e.x.values()) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf << ',';
    }
    out << e.y << '\n';
  }
}

std::uint64_t dataset_hash(const Dataset& data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto feed = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xFF;
      h *= 0x100000001b3ull;
    }
  };
  feed(data.dim);
  feed(data.size());
  for (const auto& e : data.examples) {
    feed(static_cast<std::uint64_t>(static_cast<std::int64_t>(e.y)));
    for (double v : e.x.values()) feed(std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

nlohmann::json to_json(const DatasetSpec& spec) {
  nlohmann::json j{{"kind", to_string(spec.kind)},
                   {"n_train", spec.n_train},
                   {"n_test", spec.n_test},
                   {"d", spec.d},
                   {"noise_sigma", spec.noise_sigma},
                   {"seed", spec.seed}};
  j["theta_star"] = spec.theta_star ? nlohmann::json(spec.theta_star->data()) : nlohmann::json(nullptr);
  if (spec.kind == DatasetKind::csv) {
    j["path"] = spec.path;
    j["test_path"] = spec.test_path;
  }
  return j;
}

DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
  static const std::set<std::string> keys = {"kind",        "n_train", "n_test", "d",        "theta_star",
                                             "noise_sigma", "seed",    "path",   "test_path"};
  if (!j.is_object()) throw ConfigInvalid("data: must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!keys.count(key)) throw ConfigInvalid("data." + key + ": unknown key");
  }
  DatasetSpec spec;
  const std::string kind = j.value("kind", std::string(to_string(spec.kind)));
  bool known = false;
  for (auto k : {DatasetKind::gaussian_mixture_halfspace, DatasetKind::two_moons,
                 DatasetKind::grid_images, DatasetKind::csv}) {
    if (kind == to_string(k)) {
      spec.kind = k;
      known = true;
    }
  }
  if (!known) throw ConfigInvalid("data.kind: unknown dataset kind '" + kind + "'");
  auto field = [&j](const char* key, auto fallback) {
    try {
      return j.value(key, fallback);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigInvalid(std::string("data.") + key + ": " + e.what());
    }
  };
  spec.n_train = field("n_train", spec.n_train);
  spec.n_test = field("n_test", spec.n_test);
  spec.d = field("d", spec.d);
  spec.noise_sigma = field("noise_sigma", spec.noise_sigma);
  spec.seed = field("seed", spec.seed);
  spec.path = field("path", spec.path);
  spec.test_path = field("test_path", spec.test_path);
  if (j.contains("theta_star") && !j["theta_star"].is_null()) {
    try {
      spec.theta_star = Tensor::vector(j["theta_star"].get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigInvalid(std::string("data.theta_star: ") + e.what());
    }
  }
  return spec;
}

nlohmann::json dataset_metadata(const DatasetSpec& spec, const TrainTestSplit& split) {
  char hash_train[17], hash_test[17];
  std::snprintf(hash_train, sizeof hash_train, "%016llx",
                static_cast<unsigned long long>(dataset_hash(split.train)));
  std::snprintf(hash_test, sizeof hash_test, "%016llx",
                static_cast<unsigned long long>(dataset_hash(split.test)));
  return {{"kind", to_string(spec.kind)},
          {"seed", spec.seed},
          {"n_train", split.train.size()},
          {"n_test", split.test.size()},
          {"d", split.train.dim},
          {"num_classes", split.train.num_classes},
          {"train_hash", hash_train},
          {"test_hash", hash_test}};
}

}  // namespace maxup
