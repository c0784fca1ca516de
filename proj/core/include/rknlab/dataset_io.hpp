// Newline-delimited JSON serialization of datasets: one header record, then
// one record per episode. Doubles are written as shortest round-trip
// decimals, so save/load is bit-exact.
#pragma once

#include <string>

#include "rknlab/ssm.hpp"

namespace rknlab {

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace rknlab
