#pragma once

#include <filesystem>
#include <vector>

#include "minaf/dsp/spectrogram.hpp"

namespace minaf::dsp {

/// Writes an IEEE-float 32-bit RIFF/WAVE file with one channel per waveform.
/// All channels must share length and sample rate.
void write_wav(const std::filesystem::path& path, const std::vector<Waveform>& channels);

/// Reads 32-bit float or 16-bit PCM WAV files, one Waveform per channel.
/// Throws DataError on malformed input.
std::vector<Waveform> read_wav(const std::filesystem::path& path);

}  // namespace minaf::dsp
