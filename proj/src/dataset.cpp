#include "prnf/dataset.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>

#include "prnf/io.hpp"

namespace prnf::sde {

namespace {
constexpr char kMagic[4] = {'P', 'R', 'N', 'F'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_dataset(const PairDataset& ds, const std::string& path, const std::string& meta_json) {
  ds.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  io::put_magic(os, kMagic);
  io::put_u32(os, kVersion);
  io::put_u32(os, static_cast<std::uint32_t>(ds.d));
  io::put_u64(os, static_cast<std::uint64_t>(ds.rows()));
  io::put_f64(os, ds.t_final);
  for (std::int64_t i = 0; i < ds.rows(); ++i) {
    for (int j = 0; j < ds.d; ++j) io::put_f64(os, ds.x0(j, i));
    for (int j = 0; j < ds.d; ++j) io::put_f64(os, ds.xt(j, i));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
  if (!meta_json.empty()) {
    std::ofstream ms(path + ".json");
    ms << meta_json << "\n";
  }
}

PairDataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  io::expect_magic(is, kMagic, "PRNF dataset");
  const std::uint32_t version = io::get_u32(is);
  if (version != kVersion) throw std::runtime_error("unsupported PRNF dataset version");
  PairDataset ds;
  ds.d = static_cast<int>(io::get_u32(is));
  const auto n = static_cast<std::int64_t>(io::get_u64(is));
  ds.t_final = io::get_f64(is);
  if (ds.d <= 0 || n < 1) throw std::runtime_error("corrupt PRNF dataset header");
  ds.x0.resize(ds.d, n);
  ds.xt.resize(ds.d, n);
  for (std::int64_t i = 0; i < n; ++i) {
    for (int j = 0; j < ds.d; ++j) ds.x0(j, i) = io::get_f64(is);
    for (int j = 0; j < ds.d; ++j) ds.xt(j, i) = io::get_f64(is);
  }
  ds.validate();
  return ds;
}

void export_dataset_csv(const PairDataset& ds, const std::string& path,
                        const std::string& comment) {
  ds.validate();
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  if (!comment.empty()) std::fprintf(f, "# %s\n", comment.c_str());
  for (int j = 0; j < ds.d; ++j) std::fprintf(f, "%sx0_%d", j ? "," : "", j);
  for (int j = 0; j < ds.d; ++j) std::fprintf(f, ",xt_%d", j);
  std::fprintf(f, "\n");
  for (std::int64_t i = 0; i < ds.rows(); ++i) {
    for (int j = 0; j < ds.d; ++j) std::fprintf(f, "%s%.17g", j ? "," : "", ds.x0(j, i));
    for (int j = 0; j < ds.d; ++j) std::fprintf(f, ",%.17g", ds.xt(j, i));
    std::fprintf(f, "\n");
  }
  std::fclose(f);
}

}  // namespace prnf::sde
