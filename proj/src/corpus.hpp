#pragma once

#include <string_view>
#include <vector>

namespace radixlm::detail {

const std::vector<std::string_view>& merge_corpus();

}  // namespace radixlm::detail
