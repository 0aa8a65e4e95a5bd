#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "polyper/params.hpp"
#include "polyper/tensor.hpp"

namespace polyper {

struct GradCheckRow {
    std::string scope;
    int checked = 0;
    double max_rel_err = 0.0;
    std::string worst;  // "name[index]" of the worst entry
    double tolerance = 0.0;
    bool pass = false;
};

using LossFn = std::function<double(const ParamStore<double>&)>;

/// Compare analytic gradients against central finite differences for the
/// given (parameter, flat index) entries. Relative error uses a small floor
/// in the denominator so near-zero gradients compare on absolute terms.
/// Rejects an empty store or an empty entry list: nothing to check.
GradCheckRow fd_check(const std::string& scope, const ParamStore<double>& store, const LossFn& loss,
                      const std::map<std::string, TensorD>& analytic,
                      const std::vector<std::pair<std::string, int>>& entries, double h, double tolerance);

/// Per-module finite-difference checks on tiny doubles-precision builds:
/// encoder, aggregation, attention (all entries including the input map),
/// and the assembled model on a parameter sample.
std::vector<GradCheckRow> run_gradcheck(std::uint64_t seed);

}  // namespace polyper
