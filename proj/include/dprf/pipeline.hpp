#pragma once

#include <iosfwd>
#include <string>

#include "dprf/config.hpp"

namespace dprf {

// Full workflow: generate -> vocab -> train baseline -> index -> first pass
// -> bm25 -> train feedback encoders -> retrieve -> evaluate -> analyze.
// Progress goes to `progress`; artifacts land under config.out_dir. Returns
// the summary text that is also written to <out_dir>/eval/summary.txt.
std::string run_pipeline(const RunConfig& config, std::ostream& progress);

}  // namespace dprf
