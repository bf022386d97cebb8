#pragma once

#include <cstddef>

#include "pdetime/diffarray.hpp"
#include "pdetime/features.hpp"

namespace pdetime {

/// One lookback/horizon sample with its aligned inputs.
struct ForecastWindow {
  Tensor X;         // lookback [L x C]
  Tensor Y;         // horizon [H x C]
  Tensor x_init;    // last lookback row [C]
  Tensor temporal;  // calendar features over all L+H positions [(L+H) x t]
  TimeIndexGrid grid;
  std::size_t offset = 0;  // row of X[0] in the source series

  std::size_t lookback() const { return X.dim(0); }
  std::size_t horizon() const { return Y.dim(0); }
  std::size_t channels() const { return X.dim(1); }
};

}  // namespace pdetime
