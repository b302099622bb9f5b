#include "minaf/dsp/wav.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "minaf/common/error.hpp"

namespace minaf::dsp {

namespace {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(const std::vector<char>& buf, std::size_t offset) {
  T v;
  std::memcpy(&v, buf.data() + offset, sizeof(T));
  return v;
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

void write_wav(const std::filesystem::path& path, const std::vector<Waveform>& channels) {
  require(!channels.empty(), "write_wav: no channels");
  const std::size_t frames = channels.front().samples.size();
  const double fs = channels.front().fs;
  for (const Waveform& w : channels) {
    require(w.samples.size() == frames && w.fs == fs, "write_wav: channels differ in length or rate");
  }
  const auto n_ch = static_cast<std::uint16_t>(channels.size());
  const auto rate = static_cast<std::uint32_t>(fs);
  const auto data_bytes = static_cast<std::uint32_t>(frames * n_ch * 4);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write WAV file " + path.string());
  out.write("RIFF", 4);
  put<std::uint32_t>(out, 4 + (8 + 18) + (8 + 4) + (8 + data_bytes));
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put<std::uint32_t>(out, 18);
  put<std::uint16_t>(out, kFormatFloat);
  put<std::uint16_t>(out, n_ch);
  put<std::uint32_t>(out, rate);
  put<std::uint32_t>(out, rate * n_ch * 4);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(n_ch * 4));
  put<std::uint16_t>(out, 32);
  put<std::uint16_t>(out, 0);
  out.write("fact", 4);
  put<std::uint32_t>(out, 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(frames));
  out.write("data", 4);
  put<std::uint32_t>(out, data_bytes);
  std::vector<float> interleaved(frames * n_ch);
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < n_ch; ++c) interleaved[i * n_ch + c] = static_cast<float>(channels[c].samples[i]);
  }
  out.write(reinterpret_cast<const char*>(interleaved.data()), static_cast<std::streamsize>(data_bytes));
  if (!out) throw DataError("failed writing WAV file " + path.string());
}

std::vector<Waveform> read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw DataError("not a RIFF/WAVE file: " + path.string());
  }
  std::uint16_t format = 0, n_ch = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_offset = 0, data_size = 0;
  bool have_fmt = false;
  for (std::size_t pos = 12; pos + 8 <= buf.size();) {
    const std::uint32_t size = get<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > buf.size()) throw DataError("truncated WAV chunk in " + path.string());
    if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0 && size >= 16) {
      format = get<std::uint16_t>(buf, body);
      n_ch = get<std::uint16_t>(buf, body + 2);
      rate = get<std::uint32_t>(buf, body + 4);
      bits = get<std::uint16_t>(buf, body + 14);
      if (format == kFormatExtensible && size >= 26) format = get<std::uint16_t>(buf, body + 24);
      have_fmt = true;
    } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
      data_offset = body;
      data_size = size;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt || data_offset == 0 || n_ch == 0) throw DataError("WAV file lacks fmt/data chunks: " + path.string());
  const bool is_float = format == kFormatFloat && bits == 32;
  const bool is_pcm16 = format == kFormatPcm && bits == 16;
  if (!is_float && !is_pcm16) throw DataError("unsupported WAV sample format in " + path.string());
  const std::size_t width = bits / 8;
  const std::size_t frames = data_size / (width * n_ch);
  std::vector<Waveform> channels(n_ch);
  for (auto& ch : channels) {
    ch.fs = rate;
    ch.samples.resize(frames);
  }
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < n_ch; ++c) {
      const std::size_t off = data_offset + (i * n_ch + c) * width;
      channels[c].samples[i] = is_float ? static_cast<double>(get<float>(buf, off))
                                        : static_cast<double>(get<std::int16_t>(buf, off)) / 32768.0;
    }
  }
  return channels;
}

}  // namespace minaf::dsp
