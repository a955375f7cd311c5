#include "swinseg3d/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "swinseg3d/text.hpp"

namespace swinseg3d {

static_assert(std::endian::native == std::endian::little, "checkpoint blob assumes a little-endian host");

namespace {

constexpr const char* kMagic = "swinseg3d-checkpoint";

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

struct TensorEntry {
  std::string name;
  Shape shape;
  std::size_t offset = 0;
  std::size_t count = 0;
};

CheckpointError corrupt(const std::string& what) {
  return CheckpointError(CheckpointErrorKind::CorruptManifest, "checkpoint manifest: " + what);
}

std::string shape_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

Shape parse_shape(const std::string& text) {
  Shape s;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto x = text.find('x', start);
    const std::string item = text.substr(start, x == std::string::npos ? std::string::npos : x - start);
    try {
      s.push_back(parse_size(item, "shape"));
    } catch (const ConfigError&) {
      throw corrupt("bad tensor shape '" + text + "'");
    }
    if (x == std::string::npos) break;
    start = x + 1;
  }
  return s;
}

std::pair<std::string, std::string> split_kv(const std::string& line) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) throw corrupt("expected key=value, got '" + line + "'");
  return {line.substr(0, eq), line.substr(eq + 1)};
}

}  // namespace

template <typename T>
std::string serialize_checkpoint(const SegmentationModel<T>& model, const TrainState<T>& state) {
  std::vector<std::pair<std::string, const std::vector<T>*>> blobs;
  std::vector<Shape> shapes;
  const auto& params = model.parameters();
  for (const auto& p : params) {
    blobs.emplace_back("param:" + p.name, &p.value.node()->data);
    shapes.push_back(p.value.shape());
  }
  auto add_group = [&](const std::string& prefix, const std::vector<std::vector<T>>& group) {
    if (group.empty()) return;
    if (group.size() != params.size()) throw ContractError("checkpoint: " + prefix + " does not match the parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (group[i].size() != params[i].value.numel()) throw ContractError("checkpoint: " + prefix + " size mismatch");
      blobs.emplace_back(prefix + ":" + params[i].name, &group[i]);
      shapes.push_back(params[i].value.shape());
    }
  };
  add_group("adam.m", state.adam.m);
  add_group("adam.v", state.adam.v);
  add_group("best", state.best_weights);

  std::ostringstream os;
  os << kMagic << ' ' << kCheckpointVersion << '\n' << "dtype=" << dtype_name<T>() << '\n';
  os << "[model]\n";
  for (const auto& [k, v] : model.config().to_entries()) os << k << '=' << v << '\n';
  os << "[optimizer]\n"
     << "step=" << state.adam.step << '\n'
     << "lr=" << format_double(state.adam.lr) << '\n'
     << "beta1=" << format_double(state.adam.beta1) << '\n'
     << "beta2=" << format_double(state.adam.beta2) << '\n'
     << "epsilon=" << format_double(state.adam.epsilon) << '\n';
  os << "[trainer]\n"
     << "epoch_loss_sum=" << format_double(state.epoch_loss_sum) << '\n'
     << "epoch_samples=" << state.epoch_samples << '\n'
     << "stale_epochs=" << state.stale_epochs << '\n'
     << "best_epoch=" << state.log.best_epoch << '\n'
     << "best_val_dice=" << format_double(state.log.best_val_dice) << '\n'
     << "best_val_loss=" << format_double(state.log.best_val_loss) << '\n'
     << "stop_reason=" << state.log.stop_reason << '\n';
  os << "[log]\n" << state.log.to_csv();
  os << "[tensors]\n";
  std::size_t offset = 0;
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    const std::size_t n = blobs[i].second->size();
    os << blobs[i].first << ' ' << shape_text(shapes[i]) << ' ' << offset << ' ' << n << '\n';
    offset += n;
  }
  os << "end\n";
  std::string out = os.str();
  const std::size_t head = out.size();
  out.resize(head + offset * sizeof(T));
  char* dst = out.data() + head;
  for (const auto& [name, data] : blobs) {
    std::memcpy(dst, data->data(), data->size() * sizeof(T));
    dst += data->size() * sizeof(T);
  }
  return out;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const SegmentationModel<T>& model,
                     const TrainState<T>& state) {
  const std::string bytes = serialize_checkpoint(model, state);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for checkpoint " + path.string());
}

template <typename T>
Checkpoint<T> parse_checkpoint(const std::string& bytes, const ModelConfig* expected) {
  const auto end_pos = bytes.find("\nend\n");
  if (end_pos == std::string::npos) {
    if (bytes.rfind(kMagic, 0) != 0) throw corrupt("missing header");
    throw CheckpointError(CheckpointErrorKind::Truncated, "checkpoint: manifest is incomplete");
  }
  const std::size_t blob_start = end_pos + 5;
  std::istringstream in(bytes.substr(0, end_pos + 1));
  std::string line;

  std::getline(in, line);
  {
    std::istringstream hs(line);
    std::string magic;
    int version = 0;
    if (!(hs >> magic) || magic != kMagic) throw corrupt("missing header");
    if (!(hs >> version)) throw corrupt("missing version");
    if (version != kCheckpointVersion) {
      throw CheckpointError(CheckpointErrorKind::VersionMismatch, "checkpoint version " + std::to_string(version) +
                                                                      ", this build reads version " +
                                                                      std::to_string(kCheckpointVersion));
    }
  }
  std::getline(in, line);
  const auto [dk, dtype] = split_kv(line);
  if (dk != "dtype" || (dtype != "f32" && dtype != "f64")) throw corrupt("bad dtype line '" + line + "'");
  const std::size_t elem = dtype == "f32" ? 4 : 8;

  Checkpoint<T> ck;
  std::string section, log_text;
  std::vector<TensorEntry> entries;
  try {
    while (std::getline(in, line)) {
      if (line.size() > 2 && line.front() == '[' && line.back() == ']') {
        section = line.substr(1, line.size() - 2);
        continue;
      }
      if (section == "model") {
        const auto [k, v] = split_kv(line);
        if (!ck.config.apply(k, v)) throw corrupt("unknown model key '" + k + "'");
      } else if (section == "optimizer") {
        const auto [k, v] = split_kv(line);
        auto& a = ck.state.adam;
        if (k == "step") a.step = parse_u64(v, k);
        else if (k == "lr") a.lr = static_cast<T>(parse_double(v, k));
        else if (k == "beta1") a.beta1 = static_cast<T>(parse_double(v, k));
        else if (k == "beta2") a.beta2 = static_cast<T>(parse_double(v, k));
        else if (k == "epsilon") a.epsilon = static_cast<T>(parse_double(v, k));
        else throw corrupt("unknown optimizer key '" + k + "'");
      } else if (section == "trainer") {
        const auto [k, v] = split_kv(line);
        auto& s = ck.state;
        if (k == "epoch_loss_sum") s.epoch_loss_sum = parse_double(v, k);
        else if (k == "epoch_samples") s.epoch_samples = parse_size(v, k);
        else if (k == "stale_epochs") s.stale_epochs = parse_size(v, k);
        else if (k == "best_epoch") s.log.best_epoch = parse_size(v, k);
        else if (k == "best_val_dice") s.log.best_val_dice = parse_double(v, k);
        else if (k == "best_val_loss") s.log.best_val_loss = parse_double(v, k);
        else if (k == "stop_reason") s.log.stop_reason = v;
        else throw corrupt("unknown trainer key '" + k + "'");
      } else if (section == "log") {
        log_text += line + '\n';
      } else if (section == "tensors") {
        std::istringstream ts(line);
        TensorEntry e;
        std::string shape;
        if (!(ts >> e.name >> shape >> e.offset >> e.count)) throw corrupt("bad tensor line '" + line + "'");
        e.shape = parse_shape(shape);
        if (shape_numel(e.shape) != e.count) throw corrupt("tensor " + e.name + " count does not match its shape");
        entries.push_back(std::move(e));
      } else {
        throw corrupt("line outside any section: '" + line + "'");
      }
    }
    ck.state.log.epochs = TrainLog::parse_csv(log_text);
    ck.config.validate();
  } catch (const ConfigError& e) {
    throw corrupt(e.what());
  }

  if (expected && !(*expected == ck.config)) {
    throw CheckpointError(CheckpointErrorKind::ConfigMismatch,
                          "checkpoint was written for a different model configuration");
  }

  std::size_t total = 0;
  for (const auto& e : entries) {
    if (e.offset != total) throw corrupt("tensor " + e.name + " is not contiguous");
    total += e.count;
  }
  const std::size_t have = bytes.size() - blob_start;
  if (have < total * elem) {
    throw CheckpointError(CheckpointErrorKind::Truncated, "checkpoint blob holds " + std::to_string(have) +
                                                              " bytes, manifest needs " +
                                                              std::to_string(total * elem));
  }
  if (have > total * elem) throw corrupt("trailing bytes after tensor blob");

  auto read = [&](const TensorEntry& e) {
    std::vector<T> out(e.count);
    const char* src = bytes.data() + blob_start + e.offset * elem;
    for (std::size_t i = 0; i < e.count; ++i) {
      if (elem == 4) {
        float f;
        std::memcpy(&f, src + 4 * i, 4);
        out[i] = static_cast<T>(f);
      } else {
        double d;
        std::memcpy(&d, src + 8 * i, 8);
        out[i] = static_cast<T>(d);
      }
    }
    return out;
  };

  ck.model = build_model<T>(ck.config);
  auto& params = ck.model->parameters();
  std::size_t next = 0;
  auto take_group = [&](const std::string& prefix, std::vector<std::vector<T>>* sink) {
    if (next >= entries.size() || entries[next].name.rfind(prefix + ":", 0) != 0) {
      if (sink) return;
      throw corrupt("missing " + prefix + " tensors");
    }
    for (auto& p : params) {
      if (next >= entries.size()) throw corrupt("missing tensor " + prefix + ":" + p.name);
      const auto& e = entries[next++];
      if (e.name != prefix + ":" + p.name || e.shape != p.value.shape()) {
        throw corrupt("tensor " + e.name + " " + shape_str(e.shape) + " does not match " + prefix + ":" + p.name +
                      " " + shape_str(p.value.shape()));
      }
      auto data = read(e);
      if (sink) {
        sink->push_back(std::move(data));
      } else {
        auto dst = p.value.mutable_data();
        std::copy(data.begin(), data.end(), dst.begin());
      }
    }
  };
  take_group("param", nullptr);
  take_group("adam.m", &ck.state.adam.m);
  take_group("adam.v", &ck.state.adam.v);
  take_group("best", &ck.state.best_weights);
  if (next != entries.size()) throw corrupt("unexpected tensor " + entries[next].name);
  return ck;
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_checkpoint<T>(ss.str(), expected);
  } catch (const CheckpointError& e) {
    throw CheckpointError(e.checkpoint_kind(), path.string() + ": " + e.what());
  }
}

template std::string serialize_checkpoint(const SegmentationModel<float>&, const TrainState<float>&);
template std::string serialize_checkpoint(const SegmentationModel<double>&, const TrainState<double>&);
template void save_checkpoint(const std::filesystem::path&, const SegmentationModel<float>&,
                              const TrainState<float>&);
template void save_checkpoint(const std::filesystem::path&, const SegmentationModel<double>&,
                              const TrainState<double>&);
template Checkpoint<float> parse_checkpoint<float>(const std::string&, const ModelConfig*);
template Checkpoint<double> parse_checkpoint<double>(const std::string&, const ModelConfig*);
template Checkpoint<float> load_checkpoint<float>(const std::filesystem::path&, const ModelConfig*);
template Checkpoint<double> load_checkpoint<double>(const std::filesystem::path&, const ModelConfig*);

}  // namespace swinseg3d
