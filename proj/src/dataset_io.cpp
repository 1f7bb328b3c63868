#include "specvae/dataset_io.hpp"

#include <json.hpp>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace specvae {
namespace {

// All integers little-endian; asserted once so the raw writes below are valid.
static_assert(std::endian::native == std::endian::little,
              "tensor file writer assumes a little-endian host");

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is, const std::string& field) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  check(bool(is), "tensor file: truncated " + field);
  return v;
}

}  // namespace

void write_spec_file(const std::filesystem::path& path, const Imagef& data) {
  std::ofstream os(path, std::ios::binary);
  check(bool(os), "cannot open for writing: " + path.string());
  os.write("SPEC", 4);
  write_u32(os, std::uint32_t(data.rows()));
  write_u32(os, std::uint32_t(data.cols()));
  write_u32(os, kSpecFileVersion);
  os.write(reinterpret_cast<const char*>(data.data()),
           std::streamsize(sizeof(float)) * data.size());
  check(bool(os), "write failed: " + path.string());
}

Imagef read_spec_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  check(bool(is), "cannot open: " + path.string());
  char magic[4] = {};
  is.read(magic, 4);
  check(bool(is) && std::memcmp(magic, "SPEC", 4) == 0,
        "tensor file: bad magic in " + path.string());
  const std::uint32_t h = read_u32(is, "height");
  const std::uint32_t w = read_u32(is, "width");
  const std::uint32_t version = read_u32(is, "version");
  check(version == kSpecFileVersion,
        "tensor file: unsupported version " + std::to_string(version));
  check(h > 0 && w > 0 && h <= 1u << 16 && w <= 1u << 16,
        "tensor file: implausible dims in " + path.string());
  Imagef data(h, w);
  is.read(reinterpret_cast<char*>(data.data()),
          std::streamsize(sizeof(float)) * data.size());
  check(bool(is), "tensor file: truncated pixel data in " + path.string());
  return data;
}

std::string record_to_json_line(const InterferenceRecord& rec, const std::string& file) {
  nlohmann::ordered_json j;
  j["file"] = file;
  j["class_id"] = to_string(rec.class_id);
  j["power_db"] = rec.power_db;
  j["bandwidth_hz"] = rec.bandwidth_hz;
  j["distance_m"] = rec.distance_m;
  j["seed"] = rec.seed;
  j["provenance"] = rec.provenance;
  return j.dump();
}

InterferenceRecord record_from_json_line(const std::string& line, std::string* file_out) {
  try {
    const nlohmann::json j = nlohmann::json::parse(line);
    InterferenceRecord rec;
    rec.class_id = interference_class_from_string(j.at("class_id").get<std::string>());
    rec.power_db = j.at("power_db").get<double>();
    rec.bandwidth_hz = j.at("bandwidth_hz").get<double>();
    rec.distance_m = j.at("distance_m").get<double>();
    rec.seed = j.at("seed").get<std::uint64_t>();
    rec.provenance = j.value("provenance", std::string("generated"));
    if (file_out) *file_out = j.at("file").get<std::string>();
    return rec;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("index line: ") + e.what());
  }
}

void write_dataset(const std::filesystem::path& dir,
                   const std::vector<std::pair<Spectrogram, InterferenceRecord>>& samples) {
  std::filesystem::create_directories(dir);
  std::ofstream index(dir / "index.jsonl");
  check(bool(index), "cannot open index for writing in " + dir.string());
  char name[32];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::snprintf(name, sizeof(name), "sample_%06zu.spec", i);
    write_spec_file(dir / name, samples[i].first.data);
    index << record_to_json_line(samples[i].second, name) << "\n";
  }
  check(bool(index), "index write failed in " + dir.string());
}

std::vector<std::pair<Spectrogram, InterferenceRecord>> load_dataset(
    const std::filesystem::path& dir) {
  std::ifstream index(dir / "index.jsonl");
  check(bool(index), "cannot open " + (dir / "index.jsonl").string());
  std::vector<std::pair<Spectrogram, InterferenceRecord>> out;
  std::string line;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    std::string file;
    InterferenceRecord rec = record_from_json_line(line, &file);
    Spectrogram s;
    s.data = read_spec_file(dir / file);
    s.meta = rec;
    out.emplace_back(std::move(s), std::move(rec));
  }
  check(!out.empty(), "empty dataset in " + dir.string());
  return out;
}

}  // namespace specvae
