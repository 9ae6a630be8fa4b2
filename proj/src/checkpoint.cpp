#include "faceanon/checkpoint.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>

namespace faceanon {

namespace {

constexpr char kMagic[4] = {'F', 'A', 'T', 'N'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const fs::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CheckpointError("truncated tensor file " + path.string());
  return v;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

std::uint64_t parse_hex64(const std::string& s) { return std::stoull(s, nullptr, 16); }

}  // namespace

template <typename Scalar>
void write_tensor_file(const fs::path& path, const NamedTensorRefs<Scalar>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(kMagic, 4);
  put(out, kVersion);
  put(out, static_cast<std::uint32_t>(sizeof(Scalar)));
  put(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape& s = t->shape();
    for (std::int64_t d : {s.n, s.c, s.h, s.w}) put(out, d);
    out.write(reinterpret_cast<const char*>(t->data()), static_cast<std::streamsize>(t->size() * sizeof(Scalar)));
  }
  if (!out) throw CheckpointError("failed writing " + path.string());
}

template <typename Scalar>
TensorMap<Scalar> read_tensor_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("missing tensor file " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("not a tensor file: " + path.string());
  if (get<std::uint32_t>(in, path) != kVersion) throw CheckpointError("unsupported tensor file version: " + path.string());
  const auto width = get<std::uint32_t>(in, path);
  const auto count = get<std::uint32_t>(in, path);
  if (width != sizeof(float) && width != sizeof(double)) throw CheckpointError("bad scalar width in " + path.string());
  TensorMap<Scalar> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in, path);
    if (len > 4096) throw CheckpointError("corrupt tensor name in " + path.string());
    std::string name(len, '\0');
    in.read(name.data(), len);
    std::array<std::int64_t, 4> d{};
    for (auto& v : d) v = get<std::int64_t>(in, path);
    for (auto v : d) {
      if (v < 0 || v > (1 << 24)) throw CheckpointError("corrupt tensor shape in " + path.string());
    }
    Shape s{d[0], d[1], d[2], d[3]};
    Tensor<Scalar> t(s);
    if (width == sizeof(Scalar)) {
      in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(Scalar)));
    } else if (width == sizeof(float)) {
      Eigen::ArrayXf tmp(t.size());
      in.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(tmp.size() * sizeof(float)));
      t.array() = tmp.template cast<Scalar>();
    } else {
      Eigen::ArrayXd tmp(t.size());
      in.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(tmp.size() * sizeof(double)));
      t.array() = tmp.template cast<Scalar>();
    }
    if (!in) throw CheckpointError("truncated tensor file " + path.string());
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

template <typename Scalar>
NamedTensorRefs<Scalar> module_state(nn::Module<Scalar>& module) {
  NamedTensorRefs<Scalar> out;
  for (auto& [name, p] : module.parameters()) out.emplace_back("param:" + name, &p->value());
  for (auto& [name, b] : module.buffers()) out.emplace_back("buffer:" + name, b);
  return out;
}

template <typename Scalar>
void load_module_state(nn::Module<Scalar>& module, const TensorMap<Scalar>& state, const std::string& what) {
  std::vector<std::string> problems;
  auto restore = [&](const std::string& key, Tensor<Scalar>& target) {
    auto it = state.find(key);
    if (it == state.end()) {
      problems.push_back("missing " + key);
    } else if (!(it->second.shape() == target.shape())) {
      problems.push_back(key + " has shape " + to_string(it->second.shape()) + ", expected " +
                         to_string(target.shape()));
    }
  };
  for (auto& [name, p] : module.parameters()) restore("param:" + name, p->mutable_value());
  for (auto& [name, b] : module.buffers()) restore("buffer:" + name, *b);
  if (!problems.empty()) {
    std::string msg = what + ": incompatible state";
    for (const auto& p : problems) msg += "\n  " + p;
    throw CheckpointError(msg);
  }
  for (auto& [name, p] : module.parameters()) p->mutable_value() = state.at("param:" + name);
  for (auto& [name, b] : module.buffers()) *b = state.at("buffer:" + name);
}

std::uint64_t hash_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a(bytes.data(), bytes.size());
}

template <typename Scalar>
CheckpointManifest save_checkpoint(const fs::path& dir, ModelBundle<Scalar>& models, long step, int epoch,
                                   std::uint64_t config_hash, const NamedTensorRefs<Scalar>* optimizer_state) {
  fs::create_directories(dir);
  CheckpointManifest m;
  m.config_hash = config_hash;
  m.step = step;
  m.epoch = epoch;
  m.scalar = sizeof(Scalar) == sizeof(float) ? "float32" : "float64";
  for (auto& [name, net] : models.networks()) {
    const std::string file = name + ".bin";
    write_tensor_file<Scalar>(dir / file, module_state(*net));
    m.files[file] = hex64(hash_file(dir / file));
  }
  if (optimizer_state != nullptr) {
    write_tensor_file<Scalar>(dir / kOptimizerFile, *optimizer_state);
    m.files[kOptimizerFile] = hex64(hash_file(dir / kOptimizerFile));
  }
  nlohmann::json j;
  j["config_hash"] = hex64(m.config_hash);
  j["step"] = m.step;
  j["epoch"] = m.epoch;
  j["scalar"] = m.scalar;
  j["files"] = m.files;
  std::ofstream out(dir / kManifestName, std::ios::trunc);
  out << j.dump(2) << "\n";
  if (!out) throw CheckpointError("cannot write manifest in " + dir.string());
  return m;
}

CheckpointManifest read_manifest(const fs::path& dir) {
  std::ifstream in(dir / kManifestName);
  if (!in) throw CheckpointError("no manifest in " + dir.string());
  CheckpointManifest m;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    m.config_hash = parse_hex64(j.at("config_hash").get<std::string>());
    m.step = j.at("step").get<long>();
    m.epoch = j.at("epoch").get<int>();
    m.scalar = j.at("scalar").get<std::string>();
    m.files = j.at("files").get<std::map<std::string, std::string>>();
  } catch (const std::exception& e) {
    throw CheckpointError("corrupt manifest in " + dir.string() + ": " + e.what());
  }
  return m;
}

template <typename Scalar>
LoadResult load_checkpoint(const fs::path& dir, ModelBundle<Scalar>& models, const LoadOptions& options,
                           TensorMap<Scalar>* optimizer_state) {
  LoadResult result;
  result.manifest = read_manifest(dir);
  const CheckpointManifest& m = result.manifest;

  if (options.check_config && m.config_hash != options.expected_config_hash) {
    const std::string msg = "checkpoint config hash " + hex64(m.config_hash) + " differs from current " +
                            hex64(options.expected_config_hash);
    if (!options.allow_config_mismatch) throw ConfigMismatchError(msg + " (pass the allow flag to proceed)");
    result.warnings.push_back(msg);
  }

  std::vector<std::string> wanted;
  for (auto& [name, net] : models.networks()) {
    const bool needed = !options.inference_only ||
                        std::find(inference_networks().begin(), inference_networks().end(), name) !=
                            inference_networks().end();
    if (needed) wanted.push_back(name + ".bin");
  }

  // Verify everything before touching any network so a failed load leaves
  // the bundle as it was.
  std::vector<std::string> diff;
  for (const auto& file : wanted) {
    auto it = m.files.find(file);
    if (it == m.files.end()) {
      diff.push_back(file + ": not listed in manifest");
    } else if (!fs::exists(dir / file)) {
      diff.push_back(file + ": listed with hash " + it->second + " but missing on disk");
    } else {
      const std::string actual = hex64(hash_file(dir / file));
      if (actual != it->second) diff.push_back(file + ": manifest hash " + it->second + ", file hash " + actual);
    }
  }
  if (!diff.empty()) {
    std::string msg = "checkpoint " + dir.string() + " does not match its manifest";
    if (!options.inference_only) msg += " (inference-only loading accepts generator-only checkpoints)";
    for (const auto& d : diff) msg += "\n  " + d;
    throw CheckpointError(msg);
  }

  std::vector<std::pair<nn::Module<Scalar>*, TensorMap<Scalar>>> staged;
  for (auto& [name, net] : models.networks()) {
    const std::string file = name + ".bin";
    if (std::find(wanted.begin(), wanted.end(), file) == wanted.end()) continue;
    staged.emplace_back(net, read_tensor_file<Scalar>(dir / file));
  }
  std::size_t i = 0;
  for (auto& [name, net] : models.networks()) {
    if (std::find(wanted.begin(), wanted.end(), name + ".bin") == wanted.end()) continue;
    load_module_state(*net, staged[i++].second, name);
    result.loaded.push_back(name);
  }

  if (optimizer_state != nullptr && !options.inference_only) {
    auto it = m.files.find(kOptimizerFile);
    if (it != m.files.end() && fs::exists(dir / kOptimizerFile)) {
      const std::string actual = hex64(hash_file(dir / kOptimizerFile));
      if (actual != it->second) {
        throw CheckpointError(std::string(kOptimizerFile) + ": manifest hash " + it->second + ", file hash " + actual);
      }
      *optimizer_state = read_tensor_file<Scalar>(dir / kOptimizerFile);
    }
  }
  return result;
}

std::optional<fs::path> latest_checkpoint(const fs::path& root) {
  if (!fs::exists(root)) return std::nullopt;
  std::optional<fs::path> best;
  long best_step = -1;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory() || !fs::exists(entry.path() / kManifestName)) continue;
    try {
      const auto m = read_manifest(entry.path());
      if (m.step > best_step) {
        best_step = m.step;
        best = entry.path();
      }
    } catch (const CheckpointError&) {
      continue;
    }
  }
  return best;
}

#define FACEANON_INSTANTIATE_CKPT(S)                                                                         \
  template void write_tensor_file<S>(const fs::path&, const NamedTensorRefs<S>&);                            \
  template TensorMap<S> read_tensor_file<S>(const fs::path&);                                                \
  template NamedTensorRefs<S> module_state(nn::Module<S>&);                                                  \
  template void load_module_state(nn::Module<S>&, const TensorMap<S>&, const std::string&);                  \
  template CheckpointManifest save_checkpoint(const fs::path&, ModelBundle<S>&, long, int, std::uint64_t,    \
                                              const NamedTensorRefs<S>*);                                    \
  template LoadResult load_checkpoint(const fs::path&, ModelBundle<S>&, const LoadOptions&, TensorMap<S>*);

FACEANON_INSTANTIATE_CKPT(float)
FACEANON_INSTANTIATE_CKPT(double)

}  // namespace faceanon
