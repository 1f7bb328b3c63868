#pragma once

// On-disk dataset format: one tensor file per sample (16-byte header: magic
// "SPEC", u32 height, u32 width, u32 version; then little-endian f32
// row-major pixels) plus a JSON-lines index with one record per line.

#include "specvae/synth.hpp"

#include <filesystem>

namespace specvae {

constexpr std::uint32_t kSpecFileVersion = 1;

void write_spec_file(const std::filesystem::path& path, const Imagef& data);
Imagef read_spec_file(const std::filesystem::path& path);

// Writes sample_NNNNNN.spec files plus index.jsonl into dir (created if absent).
void write_dataset(const std::filesystem::path& dir,
                   const std::vector<std::pair<Spectrogram, InterferenceRecord>>& samples);

std::vector<std::pair<Spectrogram, InterferenceRecord>> load_dataset(
    const std::filesystem::path& dir);

std::string record_to_json_line(const InterferenceRecord& rec, const std::string& file);
InterferenceRecord record_from_json_line(const std::string& line, std::string* file_out);

}  // namespace specvae
