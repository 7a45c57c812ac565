#pragma once

#include <vector>

#include "gridformer/tape.hpp"

namespace gridformer::detail {

// Evaluate one op from its parent values. The single forward path: public ops
// and tape replay both call this, which is what makes replay bit-exact.
template <typename T>
Tensor<T> forward_compute(OpKind kind, const OpAttrs& attrs,
                          const std::vector<const Tensor<T>*>& ps);

}  // namespace gridformer::detail
