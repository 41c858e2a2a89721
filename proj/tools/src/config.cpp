#include "wcgan/cli/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "wcgan/error.hpp"

namespace wcgan::cli {

namespace {

namespace pt = boost::property_tree;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t to_size(const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

DatasetKind to_dataset(const std::string& v) {
  if (v == "synthetic") return DatasetKind::synthetic;
  if (v == "cifar10-binary") return DatasetKind::cifar10_binary;
  throw ConfigError("unknown dataset '" + v + "' (expected synthetic or cifar10-binary)");
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"run.dataset", [](RunConfig& c, const std::string& v) { c.dataset = to_dataset(v); }},
      {"run.output", [](RunConfig& c, const std::string& v) { c.output_dir = v; }},
      {"run.workers", [](RunConfig& c, const std::string& v) { c.workers = to_size(v); }},
      {"run.seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); }},
      {"data.path", [](RunConfig& c, const std::string& v) { c.dataset_path = v; }},
      {"data.classes", [](RunConfig& c, const std::string& v) { c.classes = to_size(v); }},
      {"data.samples_per_class", [](RunConfig& c, const std::string& v) { c.samples_per_class = to_size(v); }},
      {"data.modes_per_class", [](RunConfig& c, const std::string& v) { c.modes_per_class = to_size(v); }},
      {"data.class_radius", [](RunConfig& c, const std::string& v) { c.class_radius = to_double(v); }},
      {"data.mode_offset", [](RunConfig& c, const std::string& v) { c.mode_offset = to_double(v); }},
      {"data.sigma", [](RunConfig& c, const std::string& v) { c.sigma = to_double(v); }},
      {"model.variant", [](RunConfig& c, const std::string& v) { c.loop.variant = parse_variant(v); }},
      {"model.latent_dim", [](RunConfig& c, const std::string& v) { c.latent_dim = to_size(v); }},
      {"model.hidden", [](RunConfig& c, const std::string& v) { c.hidden = to_size(v); }},
      {"model.depth", [](RunConfig& c, const std::string& v) { c.depth = to_size(v); }},
      {"model.gen_width", [](RunConfig& c, const std::string& v) { c.gen_width = to_size(v); }},
      {"model.disc_width", [](RunConfig& c, const std::string& v) { c.disc_width = to_size(v); }},
      {"train.epochs", [](RunConfig& c, const std::string& v) { c.loop.epochs = to_size(v); }},
      {"train.batch_size", [](RunConfig& c, const std::string& v) { c.loop.batch_size = to_size(v); }},
      {"train.n_critic", [](RunConfig& c, const std::string& v) { c.loop.n_critic = to_size(v); }},
      {"train.lr", [](RunConfig& c, const std::string& v) { c.loop.lr = to_double(v); }},
      {"train.beta1", [](RunConfig& c, const std::string& v) { c.loop.beta1 = to_double(v); }},
      {"train.beta2", [](RunConfig& c, const std::string& v) { c.loop.beta2 = to_double(v); }},
      {"train.adam_eps", [](RunConfig& c, const std::string& v) { c.loop.adam_eps = to_double(v); }},
      {"train.clip_c", [](RunConfig& c, const std::string& v) { c.loop.clip_c = to_double(v); }},
      {"train.summary_samples", [](RunConfig& c, const std::string& v) { c.loop.summary_samples = to_size(v); }},
      {"metrics.is", [](RunConfig& c, const std::string& v) { c.metrics.is = to_bool(v); }},
      {"metrics.fid", [](RunConfig& c, const std::string& v) { c.metrics.fid = to_bool(v); }},
      {"metrics.mode_coverage", [](RunConfig& c, const std::string& v) { c.metrics.mode_coverage = to_bool(v); }},
      {"metrics.cycling", [](RunConfig& c, const std::string& v) { c.metrics.cycling = to_bool(v); }},
  };
  return table;
}

}  // namespace

std::string to_string(DatasetKind kind) { return kind == DatasetKind::synthetic ? "synthetic" : "cifar10-binary"; }

bool RunConfig::operator==(const RunConfig& o) const {
  const auto& a = loop;
  const auto& b = o.loop;
  const bool loops = a.lr == b.lr && a.beta1 == b.beta1 && a.beta2 == b.beta2 && a.adam_eps == b.adam_eps &&
                     a.epochs == b.epochs && a.batch_size == b.batch_size && a.n_critic == b.n_critic &&
                     a.clip_c == b.clip_c && a.variant == b.variant && a.seed == b.seed &&
                     a.summary_samples == b.summary_samples;
  return loops && dataset == o.dataset && dataset_path == o.dataset_path && classes == o.classes &&
         output_dir == o.output_dir && workers == o.workers && seed == o.seed &&
         samples_per_class == o.samples_per_class && modes_per_class == o.modes_per_class &&
         class_radius == o.class_radius && mode_offset == o.mode_offset && sigma == o.sigma &&
         latent_dim == o.latent_dim && hidden == o.hidden && depth == o.depth && gen_width == o.gen_width &&
         disc_width == o.disc_width && metrics == o.metrics;
}

RunConfig parse_config(std::string_view text) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(text)};
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config: " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }

  RunConfig c;
  std::vector<std::string> errors;
  std::set<std::string> given;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      errors.push_back("key '" + section + "' is outside any section");
      continue;
    }
    for (const auto& [key, node] : body) {
      const std::string full = section + "." + key;
      const auto it = setters().find(full);
      if (it == setters().end()) {
        errors.push_back("unknown key '" + full + "'");
        continue;
      }
      try {
        it->second(c, trim(node.data()));
        given.insert(full);
      } catch (const Error& e) {
        errors.push_back(full + ": " + e.what());
      }
    }
  }
  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }

  if (c.dataset == DatasetKind::cifar10_binary) {
    if (!given.count("data.classes")) c.classes = 10;
    if (!given.count("model.latent_dim")) c.latent_dim = 100;
  }
  c.loop.seed = c.seed;
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::vector<std::string> validate_config(const RunConfig& c) {
  std::vector<std::string> errors;
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };
  need(c.classes >= 1, "data.classes must be >= 1");
  need(c.workers >= 1, "run.workers must be >= 1");
  need(!c.output_dir.empty(), "run.output must be set");
  need(c.loop.epochs >= 1, "train.epochs must be >= 1");
  try {
    c.loop.validate();
  } catch (const Error& e) {
    errors.push_back(std::string("train: ") + e.what());
  }
  need(c.latent_dim >= 1, "model.latent_dim must be >= 1");
  if (c.dataset == DatasetKind::synthetic) {
    need(c.samples_per_class >= 1, "data.samples_per_class must be >= 1");
    need(c.modes_per_class >= 1, "data.modes_per_class must be >= 1");
    need(c.sigma >= 0.0, "data.sigma must be >= 0");
    need(c.hidden >= 1, "model.hidden must be >= 1");
    need(c.depth >= 1, "model.depth must be >= 1");
    need(c.loop.batch_size <= c.samples_per_class, "train.batch_size exceeds data.samples_per_class");
  } else {
    need(c.classes <= 10, "cifar10-binary supports at most 10 classes");
    if (c.dataset_path.empty()) {
      errors.push_back("data.path is required for cifar10-binary");
    } else {
      need(std::filesystem::is_regular_file(c.dataset_path), "data.path '" + c.dataset_path.string() + "' does not exist");
    }
    need(c.gen_width >= 2 && c.gen_width % 2 == 0, "model.gen_width must be even and >= 2");
    need(c.disc_width >= 1, "model.disc_width must be >= 1");
  }
  return errors;
}

std::string format_config(const RunConfig& c) {
  std::ostringstream os;
  os << "[run]\n"
     << "dataset = " << to_string(c.dataset) << "\n"
     << "output = " << c.output_dir.string() << "\n"
     << "workers = " << c.workers << "\n"
     << "seed = " << c.seed << "\n\n"
     << "[data]\n"
     << "path = " << c.dataset_path.string() << "\n"
     << "classes = " << c.classes << "\n"
     << "samples_per_class = " << c.samples_per_class << "\n"
     << "modes_per_class = " << c.modes_per_class << "\n"
     << "class_radius = " << fmt(c.class_radius) << "\n"
     << "mode_offset = " << fmt(c.mode_offset) << "\n"
     << "sigma = " << fmt(c.sigma) << "\n\n"
     << "[model]\n"
     << "variant = " << to_string(c.loop.variant) << "\n"
     << "latent_dim = " << c.latent_dim << "\n"
     << "hidden = " << c.hidden << "\n"
     << "depth = " << c.depth << "\n"
     << "gen_width = " << c.gen_width << "\n"
     << "disc_width = " << c.disc_width << "\n\n"
     << "[train]\n"
     << "epochs = " << c.loop.epochs << "\n"
     << "batch_size = " << c.loop.batch_size << "\n"
     << "n_critic = " << c.loop.n_critic << "\n"
     << "lr = " << fmt(c.loop.lr) << "\n"
     << "beta1 = " << fmt(c.loop.beta1) << "\n"
     << "beta2 = " << fmt(c.loop.beta2) << "\n"
     << "adam_eps = " << fmt(c.loop.adam_eps) << "\n"
     << "clip_c = " << fmt(c.loop.clip_c) << "\n"
     << "summary_samples = " << c.loop.summary_samples << "\n\n"
     << "[metrics]\n"
     << "is = " << (c.metrics.is ? "true" : "false") << "\n"
     << "fid = " << (c.metrics.fid ? "true" : "false") << "\n"
     << "mode_coverage = " << (c.metrics.mode_coverage ? "true" : "false") << "\n"
     << "cycling = " << (c.metrics.cycling ? "true" : "false") << "\n";
  return os.str();
}

MixtureSpec mixture_of(const RunConfig& c) {
  return ring_mixture(c.classes, c.modes_per_class, c.class_radius, c.mode_offset, c.sigma, derive_seed(c.seed, "data"));
}

PairSpec pair_of(const RunConfig& c) {
  if (c.dataset == DatasetKind::synthetic) {
    return {mlp_generator_spec(c.latent_dim, 2, c.hidden, c.depth),
            mlp_discriminator_spec(2, c.hidden, c.depth, c.loop.variant)};
  }
  return {generator_spec(c.latent_dim, 3, 8, c.gen_width), discriminator_spec(3, 32, c.disc_width, c.loop.variant)};
}

std::vector<ClassShard> load_shards(const RunConfig& c) {
  if (c.dataset == DatasetKind::synthetic) return synth_conditional_mixture(mixture_of(c), c.samples_per_class);
  return load_cifar_binary(c.dataset_path, c.classes, CifarLayout::cifar10);
}

}  // namespace wcgan::cli
