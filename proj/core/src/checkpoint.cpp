#include "sflab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace sflab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return (v >> 24) | ((v >> 8) & 0xFF00u) | ((v << 8) & 0xFF0000u) | (v << 24);
  }
  return v;
}

void write_blob(const fs::path& path, const Tensor& t) {
  std::vector<char> bytes(static_cast<std::size_t>(t.numel()) * 4);
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    const auto bits = to_little(std::bit_cast<std::uint32_t>(t[i]));
    std::memcpy(bytes.data() + i * 4, &bits, 4);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

Tensor read_blob(const fs::path& path, const std::string& name, const Shape& shape) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint tensor '" + name + "': cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto expected = static_cast<std::size_t>(shape_numel(shape)) * 4;
  if (bytes.size() != expected) {
    throw Error("checkpoint tensor '" + name + "': blob has " + std::to_string(bytes.size()) +
                " bytes, expected " + std::to_string(expected) + " for shape " + to_string(shape));
  }
  Tensor t(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, bytes.data() + i * 4, 4);
    t[i] = std::bit_cast<float>(to_little(bits));
  }
  return t;
}

struct TensorRef {
  std::string name;
  const Tensor* value;
};

std::vector<TensorRef> model_tensors(const ModelInstance& model) {
  std::vector<TensorRef> refs;
  for (const auto& p : model.parameters()) refs.push_back({p.name, &p.value});
  for (const auto& b : model.batch_norms()) {
    refs.push_back({b.name + ".running_mean", &b.state.running_mean});
    refs.push_back({b.name + ".running_var", &b.state.running_var});
  }
  return refs;
}

Tensor* mutable_tensor(ModelInstance& model, const std::string& name) {
  for (auto& p : model.parameters()) {
    if (p.name == name) return &p.value;
  }
  for (auto& b : model.batch_norms()) {
    if (name == b.name + ".running_mean") return &b.state.running_mean;
    if (name == b.name + ".running_var") return &b.state.running_var;
  }
  return nullptr;
}

std::string blob_name(std::size_t index) {
  std::ostringstream os;
  os << 't' << std::setw(3) << std::setfill('0') << index << ".f32";
  return os.str();
}

json spec_to_json(const ModelSpec& s) {
  return json{{"variant", std::string(variant_name(s.variant))},
              {"mix", s.mix},
              {"num_classes", s.num_classes},
              {"height", s.height},
              {"width", s.width},
              {"seed", s.seed}};
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec s;
  s.variant = parse_variant(j.at("variant").get<std::string>());
  s.mix = j.at("mix").get<float>();
  s.num_classes = j.at("num_classes").get<int>();
  s.height = j.at("height").get<int>();
  s.width = j.at("width").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

}  // namespace

void save_checkpoint(const ModelInstance& model, const fs::path& dir, const CheckpointMetadata& metadata) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create checkpoint directory " + dir.string() + ": " + ec.message());

  json tensors = json::array();
  const auto refs = model_tensors(model);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto file = blob_name(i);
    write_blob(dir / file, *refs[i].value);
    tensors.push_back(json{{"name", refs[i].name},
                           {"shape", refs[i].value->shape()},
                           {"file", file},
                           {"bytes", refs[i].value->numel() * 4}});
  }
  json manifest{{"format", kCheckpointFormat},
                {"version", kCheckpointVersion},
                {"model", spec_to_json(model.spec())},
                {"metadata", metadata},
                {"tensors", std::move(tensors)}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
  if (!out) throw Error("write failed: " + (dir / "manifest.json").string());
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw Error("no checkpoint manifest at " + manifest_path.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw Error(manifest_path.string() + ": malformed manifest: " + e.what());
  }

  try {
    if (manifest.at("format").get<std::string>() != kCheckpointFormat) {
      throw Error(manifest_path.string() + ": not an sflab checkpoint");
    }
    const int version = manifest.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw Error(manifest_path.string() + ": checkpoint version " + std::to_string(version) +
                  " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    LoadedCheckpoint loaded{build_model(spec_from_json(manifest.at("model"))), {}};
    loaded.metadata = manifest.at("metadata").get<CheckpointMetadata>();

    std::map<std::string, bool> seen;
    for (const auto& ref : model_tensors(loaded.model)) seen[ref.name] = false;
    for (const auto& entry : manifest.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      Tensor* target = mutable_tensor(loaded.model, name);
      if (!target) throw Error("checkpoint tensor '" + name + "' does not belong to a " + loaded.model.spec().label() + " model");
      if (target->shape() != shape) {
        throw Error("checkpoint tensor '" + name + "': shape " + to_string(shape) + " does not match model shape " +
                    to_string(target->shape()));
      }
      *target = read_blob(dir / entry.at("file").get<std::string>(), name, shape);
      seen[name] = true;
    }
    for (const auto& [name, found] : seen) {
      if (!found) throw Error("checkpoint is missing tensor '" + name + "'");
    }
    return loaded;
  } catch (const json::exception& e) {
    throw Error(manifest_path.string() + ": invalid manifest: " + e.what());
  }
}

void save_detector(const DetectorModel& detector, const fs::path& path) {
  json nodes = json::array();
  for (const auto& n : detector.nodes) {
    nodes.push_back(json{{"feature", n.feature},
                         {"threshold", n.threshold},
                         {"left", n.left},
                         {"right", n.right},
                         {"label", static_cast<int>(n.label)},
                         {"samples", n.samples}});
  }
  const json doc{{"format", "sflab-detector"}, {"version", 1}, {"max_depth", detector.max_depth}, {"nodes", nodes}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

DetectorModel load_detector(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read detector " + path.string());
  try {
    json doc;
    in >> doc;
    if (doc.at("format").get<std::string>() != "sflab-detector" || doc.at("version").get<int>() != 1) {
      throw Error(path.string() + ": not a version-1 sflab detector");
    }
    DetectorModel d;
    d.max_depth = doc.at("max_depth").get<int>();
    for (const auto& n : doc.at("nodes")) {
      DetectorModel::Node node;
      node.feature = n.at("feature").get<int>();
      node.threshold = n.at("threshold").get<double>();
      node.left = n.at("left").get<int>();
      node.right = n.at("right").get<int>();
      node.label = n.at("label").get<int>() ? DetectionLabel::kAdversarial : DetectionLabel::kClean;
      node.samples = n.at("samples").get<std::int64_t>();
      d.nodes.push_back(node);
    }
    const auto count = static_cast<int>(d.nodes.size());
    // Children always follow their parent, which also rules out cycles.
    for (int i = 0; i < count; ++i) {
      const auto& n = d.nodes[static_cast<std::size_t>(i)];
      if (n.feature >= kHistogramBins ||
          (n.feature >= 0 && (n.left <= i || n.left >= count || n.right <= i || n.right >= count))) {
        throw Error(path.string() + ": malformed detector tree");
      }
    }
    if (d.nodes.empty()) throw Error(path.string() + ": empty detector tree");
    return d;
  } catch (const json::exception& e) {
    throw Error(path.string() + ": invalid detector file: " + e.what());
  }
}

}  // namespace sflab
