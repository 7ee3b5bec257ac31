#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "hornn/sequence.hpp"

namespace hornn {

// FSQ1 layout, all little endian:
//   "FSQ1" | u32 T | u32 D | u32 C | f32[T*D] frames | i32[T] labels
//   | u32 len, utterance id bytes | u32 len, segment id bytes
// Frames are stored as float32; values that are not float-representable are
// rounded on write.
void write_fsq(std::ostream& out, const SequenceBatch& batch);
SequenceBatch read_fsq(std::istream& in);

void write_fsq_file(const std::filesystem::path& path, const SequenceBatch& batch);
SequenceBatch read_fsq_file(const std::filesystem::path& path);

// Writes one file per utterance plus manifest.txt listing them relative to
// `dir`. Returns the manifest path.
std::filesystem::path write_dataset(const std::filesystem::path& dir,
                                    std::span<const SequenceBatch> batches);
// Paths in the manifest are resolved against the manifest's directory. Blank
// lines are skipped.
std::vector<SequenceBatch> read_manifest(const std::filesystem::path& manifest);

}  // namespace hornn
