#include "dualmap/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

namespace dualmap {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'D', 'M', 'P', 'A', 'R', 'A', 'M', '1'};
constexpr int kFormatVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& file) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw CheckpointError(file + ": truncated");
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

void write_group(const std::filesystem::path& path, const std::vector<const NamedParameter*>& ps) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot write " + path.string());
  os.write(kMagic, sizeof kMagic);
  put_u32(os, static_cast<std::uint32_t>(ps.size()));
  for (const NamedParameter* p : ps) {
    put_u32(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    const ad::Matrix& m = p->var.value();
    put_u32(os, static_cast<std::uint32_t>(m.rows()));
    put_u32(os, static_cast<std::uint32_t>(m.cols()));
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!os) throw CheckpointError("failed writing " + path.string());
}

std::map<std::string, ad::Matrix> read_group(const std::filesystem::path& path) {
  const std::string file = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + file);
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw CheckpointError(file + ": bad magic");
  const std::uint32_t count = get_u32(is, file);
  std::map<std::string, ad::Matrix> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get_u32(is, file), '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(name.size())))
      throw CheckpointError(file + ": truncated");
    const std::uint32_t rows = get_u32(is, file);
    const std::uint32_t cols = get_u32(is, file);
    ad::Matrix m(rows, cols);
    if (!is.read(reinterpret_cast<char*>(m.data()),
                 static_cast<std::streamsize>(m.size() * sizeof(double))))
      throw CheckpointError(file + ": truncated tensor '" + name + "'");
    out.emplace(std::move(name), std::move(m));
  }
  return out;
}

}  // namespace

json trace_to_json(const std::vector<LossRecord>& trace) {
  json arr = json::array();
  for (const auto& r : trace)
    arr.push_back({{"step", r.step},
                   {"epoch", r.epoch},
                   {"total", r.total},
                   {"iou", r.iou},
                   {"matching", r.matching},
                   {"conditioned", r.conditioned}});
  return arr;
}

void save_checkpoint(const std::filesystem::path& dir, const TrainConfig& cfg,
                     const GroundingModel& model, const std::vector<LossRecord>& trace) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> groups;
  std::map<std::string, std::vector<const NamedParameter*>> by_group;
  for (const auto& p : model.parameters().all()) {
    if (!by_group.count(p.group)) groups.push_back(p.group);
    by_group[p.group].push_back(&p);
  }
  for (const auto& g : groups) write_group(dir / (g + ".bin"), by_group[g]);

  json meta{{"format", kFormatVersion},
            {"config", to_json(cfg)},
            {"vocabulary", model.embedder().vocabulary()},
            {"groups", groups}};
  std::ofstream(dir / "config.json") << meta.dump(2) << '\n';
  std::ofstream(dir / "trace.json") << trace_to_json(trace).dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const json meta = read_json(dir / "config.json");
  if (meta.value("format", 0) != kFormatVersion)
    throw CheckpointError(dir.string() + ": unsupported checkpoint format");
  TrainConfig cfg;
  try {
    cfg = apply_json(TrainConfig{}, meta.at("config"));
    cfg.validate();
  } catch (const std::exception& e) {
    throw CheckpointError(dir.string() + ": bad config: " + e.what());
  }
  TokenEmbedder embedder =
      cfg.model.encoder.backend == EmbeddingBackend::kPretrainedFiles
          ? TokenEmbedder::from_table(cfg.token_table)
          : TokenEmbedder::synthetic(meta.at("vocabulary").get<std::vector<std::string>>());
  GroundingModel model(cfg.model, std::move(embedder), cfg.seed);

  std::map<std::string, std::map<std::string, ad::Matrix>> blobs;
  for (const auto& g : meta.at("groups").get<std::vector<std::string>>())
    blobs[g] = read_group(dir / (g + ".bin"));
  for (auto& p : model.parameters().all()) {
    auto git = blobs.find(p.group);
    if (git == blobs.end()) throw CheckpointError("missing parameter group '" + p.group + "'");
    auto it = git->second.find(p.name);
    if (it == git->second.end()) throw CheckpointError("missing parameter '" + p.name + "'");
    if (it->second.rows() != p.var.rows() || it->second.cols() != p.var.cols())
      throw CheckpointError("shape mismatch for parameter '" + p.name + "'");
    p.var.mutable_value() = it->second;
    git->second.erase(it);
  }
  for (const auto& [g, rest] : blobs)
    if (!rest.empty())
      throw CheckpointError("unexpected parameter '" + rest.begin()->first + "' in group '" + g +
                            "'");

  std::vector<LossRecord> trace;
  if (std::filesystem::exists(dir / "trace.json")) {
    for (const auto& r : read_json(dir / "trace.json"))
      trace.push_back({r.at("step").get<int>(), r.at("epoch").get<int>(),
                       r.at("total").get<double>(), r.at("iou").get<double>(),
                       r.at("matching").get<double>(), r.at("conditioned").get<double>()});
  }
  return Checkpoint{std::move(cfg), std::move(model), std::move(trace)};
}

}  // namespace dualmap
