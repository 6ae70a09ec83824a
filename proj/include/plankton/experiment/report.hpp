#pragma once

#include <string>
#include <vector>

#include "plankton/experiment/experiment.hpp"

namespace plankton::experiment {

struct Report
{
    std::string text;
    std::string csv;
    std::vector<std::string> warnings;
};

/// Per-dataset clustering tables (rows: algorithm, columns: Z, cells
/// "purity ± std (overlaps ± std)") and a supervised accuracy table when any
/// record carries one. Mixed dataset names are reported as warnings.
Report render_report(const std::vector<ExperimentRecord>& records);

} // namespace plankton::experiment
