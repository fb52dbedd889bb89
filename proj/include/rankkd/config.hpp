#pragma once

// INI-style text configuration mirroring RunConfig.
//
//   [dataset]   num_classes input_dim samples_per_class cluster_spread
//               inter_class_correlation seed
//   [teacher]   hidden (comma list) seed lr momentum weight_decay epochs batch_size
//   [student]   same keys as [teacher]
//   [weights]   alpha beta gamma temperature kl_scale_t2
//   [ranking]   k form subset normalize eps
//   [optimizer] eval_every
//
// Every key is optional; missing keys keep the RunConfig defaults. Unknown
// sections or keys are rejected with the offending name.

#include <filesystem>
#include <string>

#include "rankkd/distill.hpp"

namespace rankkd {

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text form listing every key; parse_config(print_config(c)) == c.
std::string print_config(const RunConfig& cfg);

bool operator==(const RunConfig& a, const RunConfig& b);

}  // namespace rankkd
