#pragma once

#include <string>

#include "prnf/sde.hpp"

namespace prnf::sde {

// "PRNF" container: header (magic, version u32, d u32, N u64, t_final f64)
// followed by N records of 2d little-endian f64 (x0 then xt). A JSON sidecar
// at <path>.json carries provenance.
void save_dataset(const PairDataset& ds, const std::string& path,
                  const std::string& meta_json = "");
PairDataset load_dataset(const std::string& path);

// Lossless CSV twin: columns x0_0..x0_{d-1}, xt_0..xt_{d-1}.
void export_dataset_csv(const PairDataset& ds, const std::string& path,
                        const std::string& comment = "");

}  // namespace prnf::sde
