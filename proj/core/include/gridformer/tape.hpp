#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "gridformer/tensor.hpp"

namespace gridformer {

enum class OpKind : uint8_t {
    Leaf,
    Add,
    Sub,
    Mul,
    Relu,
    Sqrt,
    Abs,
    Scale,        // s0: factor
    AddScalar,    // s0: addend
    MeanAll,
    SumAll,
    Matmul,       // [M,K]x[K,N]
    Bmm,          // [B,M,K]x[B,K,N]
    TransposeLast2,
    SoftmaxLast,
    Reshape,      // i0..i3: target extents, 0 marks unused trailing slots
    ConcatCh,     // n-ary, channel axis of NCHW
    SliceCh,      // i0: start channel, i1: count
    Conv2d,       // parents x,w[,b]; i0: stride, i1: padding
    ConvT2d,      // parents x,w[,b]; i0: stride, i1: padding
    AvgPool,      // i0: r
    UpsampleNearest,  // i0: r
    PixelShuffle,     // i0: r
    PixelUnshuffle,   // i0: r
    LayerNormCh,  // parents x,gain,offset; s0: eps
    ChannelScale, // parents x (NCHW), w (C)
    PadReflect,   // i0: pad bottom, i1: pad right
    CropSpatial,  // i0: y0, i1: x0, i2: h, i3: w
};

const char* op_kind_name(OpKind k);

struct OpAttrs {
    int64_t i0 = 0, i1 = 0, i2 = 0, i3 = 0;
    double s0 = 0.0;
};

template <typename T>
struct TapeNode {
    OpKind kind = OpKind::Leaf;
    std::vector<int> parents;
    OpAttrs attrs;
    Tensor<T> value;
    std::vector<T> grad;  // empty until backward touches this node
};

// Recorded forward history. Nodes are appended in execution order, so every
// parent id precedes its child. The tape owns no parameters; watch() remembers
// which leaf belongs to which Parameter so backward can deposit gradients.
template <typename T>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Record an input/constant leaf.
    Tensor<T> leaf(const Tensor<T>& v);

    // Record a parameter leaf (memoized: one node per parameter per tape).
    Tensor<T> watch(Parameter<T>& p);

    // Reverse sweep from a scalar root. Accumulates into every watched
    // Parameter's grad (creating zero grads first), including parameters the
    // root does not reach.
    void backward(const Tensor<T>& root);

    // Gradient of the last backward root w.r.t. any tensor on this tape.
    Tensor<T> grad_of(const Tensor<T>& t) const;

    // Recompute every non-leaf node's value from its parents, in order.
    // Replaces stored values; used by the determinism/replay checks.
    void replay();

    size_t num_nodes() const { return nodes_.size(); }
    const TapeNode<T>& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

    // Internal: append a node, bind the value to (this, id).
    int record(OpKind kind, std::vector<int> parents, OpAttrs attrs, Tensor<T>& value);

private:
    std::vector<T>& grad_buffer(int id);
    void push_to_parents(TapeNode<T>& n);

    std::vector<TapeNode<T>> nodes_;
    std::unordered_map<Parameter<T>*, int> watched_;
};

// Resolve the operand's node id on `tape`, auto-leafing constants.
template <typename T>
int enlist(Tape<T>& tape, const Tensor<T>& t);

// Pick the common tape of a set of operands (nullptr if none is taped).
template <typename T>
Tape<T>* common_tape(std::initializer_list<const Tensor<T>*> ts);

}  // namespace gridformer
