#pragma once

// Parameter dump: one CSV row per tensor, `name,shape,values...`, where shape
// is the dimensions joined by 'x' (e.g. 64x1x5x1). Values use the shortest
// representation that round-trips exactly.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dlarc/tensor.hpp"

namespace dlarc::nc {

using NamedTensor = std::pair<std::string, Tensor>;

std::string format_params(const std::vector<NamedTensor>& params);
std::vector<NamedTensor> parse_params(const std::string& text);

void save_params(const std::filesystem::path& path, const std::vector<NamedTensor>& params);
std::vector<NamedTensor> load_params(const std::filesystem::path& path);

}  // namespace dlarc::nc
