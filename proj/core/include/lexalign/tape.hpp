#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lexalign/matrix.hpp"

namespace lexalign {

using NodeId = std::size_t;

/// Reverse-mode tape over the fixed op set the alignment pipeline needs.
/// The graph topology is static: build it once, then update input/param
/// values in place between steps. forward() recomputes every node in
/// insertion order; backward() walks the same list in reverse, accumulating
/// adjoints. A tape is single-user during a pass; separate tapes may run
/// concurrently.
class Tape {
public:
    enum class Op {
        Input,
        Param,
        MatMul,          // A * B
        MatMulNT,        // A * B^T
        AddBias,         // A + broadcast row b
        Tanh,
        Elu1p,
        SegmentColMax,   // column-wise max over fixed-size row segments
        RowL2Normalize,
        Transpose,
        Exp,
        ClampMax,        // min(x, cap) elementwise
        ScaleByScalar,   // matrix * scalar node
        SoftmaxXentDiag, // mean_i of -log softmax(row_i)[i], square logits
        FlopsReduce,
        OveruseReduce,
        WeightedSum,     // scalar nodes with fixed coefficients
    };

    NodeId input(std::string name, Matrix v);
    NodeId param(std::string name, Matrix v);
    NodeId matmul(NodeId a, NodeId b, std::string name = "");
    NodeId matmul_nt(NodeId a, NodeId b, std::string name = "");
    NodeId add_bias(NodeId a, NodeId bias, std::string name = "");
    NodeId tanh(NodeId x, std::string name = "");
    NodeId elu1p(NodeId x, std::string name = "");
    NodeId segment_col_max(NodeId x, std::size_t rows_per_segment, std::string name = "");
    NodeId row_l2_normalize(NodeId x, std::string name = "");
    NodeId transpose(NodeId x, std::string name = "");
    NodeId exp(NodeId x, std::string name = "");
    NodeId clamp_max(NodeId x, double cap, std::string name = "");
    NodeId scale_by_scalar(NodeId m, NodeId scalar, std::string name = "");
    NodeId softmax_xent_diag(NodeId logits, std::string name = "");
    NodeId flops_reduce(NodeId s, std::string name = "");
    NodeId overuse_reduce(NodeId s, std::string name = "");
    NodeId weighted_sum(std::vector<NodeId> terms, std::vector<double> coeffs,
                        std::string name = "");

    /// Replace the value of an Input/Param node (shape must match).
    void set_value(NodeId id, const Matrix& v);
    /// In-place access for optimizer updates.
    Matrix& mutable_value(NodeId id);
    void set_coeff(NodeId weighted_sum_node, std::size_t term, double coeff);

    const Matrix& value(NodeId id) const { return nodes_[id].value; }
    const Matrix& adjoint(NodeId id) const { return nodes_[id].adjoint; }
    const std::string& name(NodeId id) const { return nodes_[id].name; }
    std::size_t node_count() const { return nodes_.size(); }

    /// Recompute all nodes; returns the final node's scalar value. Throws on
    /// any non-finite intermediate, naming the offending node.
    double forward();
    /// forward() + reverse sweep; adjoints of all nodes are populated.
    double forward_backward();

    /// Concatenated argmax bookkeeping of every SegmentColMax node after the
    /// latest forward; used to detect tie/kink crossings in grad_check.
    std::vector<std::uint32_t> pool_argmax_snapshot() const;

private:
    struct Node {
        Op op;
        std::string name;
        std::vector<NodeId> args;
        Matrix value;
        Matrix adjoint;
        double cap = 0.0;                  // ClampMax
        std::size_t segment = 0;           // SegmentColMax
        std::vector<std::uint32_t> argmax; // SegmentColMax
        std::vector<double> coeffs;        // WeightedSum
        std::vector<double> scratch;       // softmax probs / column means
    };

    NodeId push(Node n);
    void check_id(NodeId id) const;
    void forward_node(Node& n);
    void backward_node(Node& n);

    std::vector<Node> nodes_;
};

double forward_backward(Tape& tape);

/// Central differences (f(x+eps e_i) - f(x-eps e_i)) / (2 eps).
std::vector<double> finite_diff(const std::function<double(const std::vector<double>&)>& f,
                                const std::vector<double>& x, double eps);

struct ParamGradCheck {
    std::string name;
    double max_rel_err = 0.0;
    double mean_rel_err = 0.0;
    std::size_t coords_checked = 0;
    std::size_t coords_skipped = 0;  // max-pool argmax moved under the probe
    bool pass = true;
};

struct GradReport {
    double eps = 0.0;
    double tol = 0.0;
    std::vector<ParamGradCheck> params;

    bool all_pass() const;
    std::size_t total_skipped() const;
    std::string to_table() const;
};

/// Compares the tape's analytic gradients against central finite differences
/// for every coordinate of the listed parameters. Failures are reported, not
/// thrown. Coordinates whose perturbation flips a max-pool argmax are skipped.
GradReport grad_check(Tape& tape, const std::vector<NodeId>& params, double eps = 1e-5,
                      double tol = 1e-4);

}  // namespace lexalign
