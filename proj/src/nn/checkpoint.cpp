#include "minaf/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace minaf::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

void put_u32(std::ostream& o, std::uint32_t v) { o.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& o, std::uint64_t v) { o.write(reinterpret_cast<const char*>(&v), 8); }
void put_mat(std::ostream& o, const Mat<float>& m) {
  o.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * 4));
}

struct Reader {
  std::ifstream in;
  std::string path;
  void raw(void* dst, std::size_t n) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in) throw DataError("truncated checkpoint " + path);
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, 8);
    return v;
  }
  Mat<float> mat(Eigen::Index rows, Eigen::Index cols) {
    Mat<float> m(rows, cols);
    raw(m.data(), static_cast<std::size_t>(m.size()) * 4);
    return m;
  }
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& header, const ParamSet<float>& params,
                     const Adam<float>* optimizer) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream o(tmp, std::ios::binary);
    if (!o) throw DataError("cannot write checkpoint " + path.string());
    o.write("MNFW", 4);
    put_u32(o, kCheckpointVersion);
    const std::string h = header.dump();
    put_u32(o, static_cast<std::uint32_t>(h.size()));
    o.write(h.data(), static_cast<std::streamsize>(h.size()));
    put_u32(o, static_cast<std::uint32_t>(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Param<float>& p = params[i];
      put_u32(o, static_cast<std::uint32_t>(p.name.size()));
      o.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
      put_u32(o, 2);
      put_u32(o, static_cast<std::uint32_t>(p.value.rows()));
      put_u32(o, static_cast<std::uint32_t>(p.value.cols()));
      put_mat(o, p.value);
    }
    const char flag = optimizer != nullptr ? 1 : 0;
    o.write(&flag, 1);
    if (optimizer != nullptr) {
      put_u64(o, optimizer->steps());
      for (const auto& m : optimizer->first_moments()) put_mat(o, m);
      for (const auto& v : optimizer->second_moments()) put_mat(o, v);
    }
    if (!o) throw DataError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  Reader r{std::ifstream(path, std::ios::binary), path.string()};
  if (!r.in) throw DataError("missing checkpoint " + path.string());
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, "MNFW", 4) != 0) throw DataError("not a checkpoint (bad magic): " + path.string());
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version in " + path.string());
  CheckpointData d;
  std::string h(r.u32(), '\0');
  r.raw(h.data(), h.size());
  try {
    d.header = nlohmann::json::parse(h);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint header in " + path.string());
  }
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name(r.u32(), '\0');
    r.raw(name.data(), name.size());
    if (r.u32() != 2) throw DataError("checkpoint parameter " + name + " is not a matrix");
    const auto rows = static_cast<Eigen::Index>(r.u32());
    const auto cols = static_cast<Eigen::Index>(r.u32());
    d.params.add(name, r.mat(rows, cols));
  }
  char flag = 0;
  r.raw(&flag, 1);
  d.has_optimizer = flag != 0;
  if (d.has_optimizer) {
    d.adam_steps = r.u64();
    for (std::size_t i = 0; i < d.params.size(); ++i) d.adam_m.push_back(r.mat(d.params[i].value.rows(), d.params[i].value.cols()));
    for (std::size_t i = 0; i < d.params.size(); ++i) d.adam_v.push_back(r.mat(d.params[i].value.rows(), d.params[i].value.cols()));
  }
  return d;
}

}  // namespace minaf::nn
