#include "wcgan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "wcgan/error.hpp"

namespace wcgan {

namespace {

constexpr char kMagic[4] = {'W', 'C', 'G', 'N'};
constexpr std::string_view kDiscMarker = "[discriminator]\n";
constexpr std::string_view kGenMarker = "[generator]\n";

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::span<const std::uint8_t> bytes(std::size_t n) {
    if (n > in_.size() - pos_) throw FormatError("checkpoint is truncated");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  T le() {
    auto b = bytes(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b[i]) << (8 * i));
    return v;
  }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void append(std::vector<NamedTensor>& out, const std::string& prefix, std::vector<NamedTensor> tensors) {
  for (auto& t : tensors) out.push_back({prefix + t.name, std::move(t.tensor)});
}

std::vector<NamedTensor> moments_as_tensors(const Network& net, const AdamMoments& moments, bool second) {
  std::vector<NamedTensor> out;
  const auto& buf = second ? moments.v : moments.m;
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    const auto& p = net.params()[i];
    out.push_back({p.name, Tensor(p.tensor.shape(), buf.at(i))});
  }
  return out;
}

// Tensors whose names start with prefix, with the prefix stripped, in order.
std::vector<NamedTensor> with_prefix(const std::vector<NamedTensor>& all, std::string_view prefix) {
  std::vector<NamedTensor> out;
  for (const auto& t : all) {
    if (t.name.starts_with(prefix)) out.push_back({t.name.substr(prefix.size()), t.tensor});
  }
  return out;
}

AdamMoments moments_from(const Network& net, const std::vector<NamedTensor>& m, const std::vector<NamedTensor>& v) {
  const auto& params = net.params();
  if (m.size() != params.size() || v.size() != params.size()) {
    throw FormatError("checkpoint optimizer moments do not cover every parameter");
  }
  AdamMoments out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (m[i].name != params[i].name || v[i].name != params[i].name ||
        m[i].tensor.shape() != params[i].tensor.shape() || v[i].tensor.shape() != params[i].tensor.shape()) {
      throw FormatError("checkpoint moment for '" + params[i].name + "' disagrees with the embedded spec");
    }
    out.m.emplace_back(m[i].tensor.data().begin(), m[i].tensor.data().end());
    out.v.emplace_back(v[i].tensor.data().begin(), v[i].tensor.data().end());
  }
  return out;
}

std::uint64_t step_counter(const Checkpoint& c, std::string_view name) {
  for (const auto& t : c.tensors) {
    if (t.name == name) return static_cast<std::uint64_t>(t.tensor.item());
  }
  throw FormatError("checkpoint lacks '" + std::string(name) + "'");
}

}  // namespace

bool bitwise_equal(const Checkpoint& a, const Checkpoint& b) {
  if (a.version != b.version || a.label != b.label || a.global_seed != b.global_seed) return false;
  if (!(a.gen_spec == b.gen_spec) || !(a.disc_spec == b.disc_spec)) return false;
  if (a.tensors.size() != b.tensors.size()) return false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    if (a.tensors[i].name != b.tensors[i].name || !bitwise_equal(a.tensors[i].tensor, b.tensors[i].tensor)) {
      return false;
    }
  }
  return true;
}

Checkpoint make_checkpoint(const TrainingState& state, int label, std::uint64_t global_seed) {
  Checkpoint c;
  c.label = label;
  c.global_seed = global_seed;
  c.gen_spec = state.gen.spec();
  c.disc_spec = state.disc.spec();
  append(c.tensors, "gen/", state.gen.state());
  append(c.tensors, "disc/", state.disc.state());
  append(c.tensors, "gen.m/", moments_as_tensors(state.gen, state.gen_moments, false));
  append(c.tensors, "gen.v/", moments_as_tensors(state.gen, state.gen_moments, true));
  append(c.tensors, "disc.m/", moments_as_tensors(state.disc, state.disc_moments, false));
  append(c.tensors, "disc.v/", moments_as_tensors(state.disc, state.disc_moments, true));
  c.tensors.push_back({"step/t_gen", Tensor::scalar(static_cast<double>(state.t_gen))});
  c.tensors.push_back({"step/t_disc", Tensor::scalar(static_cast<double>(state.t_disc))});
  return c;
}

Network restore_generator(const Checkpoint& c) {
  Network gen(c.gen_spec, 0);
  gen.load_state(with_prefix(c.tensors, "gen/"));
  return gen;
}

TrainingState restore_state(const Checkpoint& c, const LoopConfig& config) {
  TrainingState s;
  s.config = config;
  s.gen = restore_generator(c);
  s.disc = Network(c.disc_spec, 0);
  s.disc.load_state(with_prefix(c.tensors, "disc/"));
  s.gen_moments = moments_from(s.gen, with_prefix(c.tensors, "gen.m/"), with_prefix(c.tensors, "gen.v/"));
  s.disc_moments = moments_from(s.disc, with_prefix(c.tensors, "disc.m/"), with_prefix(c.tensors, "disc.v/"));
  s.t_gen = step_counter(c, "step/t_gen");
  s.t_disc = step_counter(c, "step/t_disc");
  return s;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.le<std::uint32_t>(c.version);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(c.label));
  w.le<std::uint64_t>(c.global_seed);
  const std::string specs = std::string(kGenMarker) + c.gen_spec.to_text() + std::string(kDiscMarker) + c.disc_spec.to_text();
  w.le<std::uint32_t>(static_cast<std::uint32_t>(specs.size()));
  w.bytes(specs.data(), specs.size());
  w.le<std::uint32_t>(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    if (t.name.size() > 0xFFFF) throw FormatError("tensor name too long: " + t.name);
    w.le<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(t.tensor.rank()));
    for (auto d : t.tensor.shape()) w.le<std::uint64_t>(d);
    for (double v : t.tensor.data()) w.f64(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  Checkpoint c;
  c.version = r.le<std::uint32_t>();
  if (c.version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(c.version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  c.label = static_cast<int>(r.le<std::uint32_t>());
  c.global_seed = r.le<std::uint64_t>();
  const auto spec_len = r.le<std::uint32_t>();
  const auto spec_bytes = r.bytes(spec_len);
  const std::string specs(spec_bytes.begin(), spec_bytes.end());
  const auto split = specs.find(kDiscMarker);
  if (!specs.starts_with(kGenMarker) || split == std::string::npos) throw FormatError("checkpoint spec block is malformed");
  try {
    c.gen_spec = ModelSpec::from_text(std::string_view(specs).substr(kGenMarker.size(), split - kGenMarker.size()));
    c.disc_spec = ModelSpec::from_text(std::string_view(specs).substr(split + kDiscMarker.size()));
  } catch (const SpecError& e) {
    throw FormatError(std::string("checkpoint spec block: ") + e.what());
  }
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.le<std::uint16_t>();
    const auto name_bytes = r.bytes(name_len);
    std::string name(name_bytes.begin(), name_bytes.end());
    const auto rank = r.le<std::uint8_t>();
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.le<std::uint64_t>();
      if (d == 0) throw FormatError("tensor '" + name + "' has a zero dimension");
      n *= d;
    }
    if (n > bytes.size() / 8) throw FormatError("checkpoint is truncated");
    std::vector<double> values(n);
    for (auto& v : values) v = r.f64();
    c.tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint tensors");
  restore_state(c);  // validates every tensor against the embedded specs
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(c);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into '" + path.string() + "': " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int label) {
  return dir / ("class_" + std::to_string(label) + ".wcgn");
}

}  // namespace wcgan
