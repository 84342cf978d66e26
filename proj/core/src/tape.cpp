#include "lexalign/tape.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace lexalign {

namespace {

const char* op_name(Tape::Op op) {
    switch (op) {
        case Tape::Op::Input: return "input";
        case Tape::Op::Param: return "param";
        case Tape::Op::MatMul: return "matmul";
        case Tape::Op::MatMulNT: return "matmul_nt";
        case Tape::Op::AddBias: return "add_bias";
        case Tape::Op::Tanh: return "tanh";
        case Tape::Op::Elu1p: return "elu1p";
        case Tape::Op::SegmentColMax: return "segment_col_max";
        case Tape::Op::RowL2Normalize: return "row_l2_normalize";
        case Tape::Op::Transpose: return "transpose";
        case Tape::Op::Exp: return "exp";
        case Tape::Op::ClampMax: return "clamp_max";
        case Tape::Op::ScaleByScalar: return "scale_by_scalar";
        case Tape::Op::SoftmaxXentDiag: return "softmax_xent_diag";
        case Tape::Op::FlopsReduce: return "flops_reduce";
        case Tape::Op::OveruseReduce: return "overuse_reduce";
        case Tape::Op::WeightedSum: return "weighted_sum";
    }
    return "?";
}

bool is_scalar(const Matrix& m) { return m.rows() == 1 && m.cols() == 1; }

}  // namespace

NodeId Tape::push(Node n) {
    if (n.name.empty()) {
        n.name = std::string(op_name(n.op)) + "#" + std::to_string(nodes_.size());
    }
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

void Tape::check_id(NodeId id) const {
    if (id >= nodes_.size()) throw std::invalid_argument("Tape: bad node id");
}

NodeId Tape::input(std::string name, Matrix v) {
    Node n;
    n.op = Op::Input;
    n.name = std::move(name);
    n.value = std::move(v);
    return push(std::move(n));
}

NodeId Tape::param(std::string name, Matrix v) {
    Node n;
    n.op = Op::Param;
    n.name = std::move(name);
    n.value = std::move(v);
    return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b, std::string name) {
    check_id(a);
    check_id(b);
    Node n;
    n.op = Op::MatMul;
    n.name = std::move(name);
    n.args = {a, b};
    return push(std::move(n));
}

NodeId Tape::matmul_nt(NodeId a, NodeId b, std::string name) {
    check_id(a);
    check_id(b);
    Node n;
    n.op = Op::MatMulNT;
    n.name = std::move(name);
    n.args = {a, b};
    return push(std::move(n));
}

NodeId Tape::add_bias(NodeId a, NodeId bias, std::string name) {
    check_id(a);
    check_id(bias);
    Node n;
    n.op = Op::AddBias;
    n.name = std::move(name);
    n.args = {a, bias};
    return push(std::move(n));
}

NodeId Tape::tanh(NodeId x, std::string name) {
    check_id(x);
    Node n;
    n.op = Op::Tanh;
    n.name = std::move(name);
    n.args = {x};
    return push(std::move(n));
}

NodeId Tape::elu1p(NodeId x, std::string name) {
    check_id(x);
    Node n;
    n.op = Op::Elu1p;
    n.name = std::move(name);
    n.args = {x};
    return push(std::move(n));
}

NodeId Tape::segment_col_max(NodeId x, std::size_t rows_per_segment, std::string name) {
    check_id(x);
    if (rows_per_segment == 0) throw std::invalid_argument("segment_col_max: zero segment size");
    Node n;
    n.op = Op::SegmentColMax;
    n.name = std::move(name);
    n.args = {x};
    n.segment = rows_per_segment;
    return push(std::move(n));
}

NodeId Tape::row_l2_normalize(NodeId x, std::string name) {
    check_id(x);
    Node n;
    n.op = Op::RowL2Normalize;
    n.name = std::move(name);
    n.args = {x};
    return push(std::move(n));
}

NodeId Tape::transpose(NodeId x, std::string name) {
    check_id(x);
    Node n;
    n.op = Op::Transpose;
    n.name = std::move(name);
    n.args = {x};
    return push(std::move(n));
}

NodeId Tape::exp(NodeId x, std::string name) {
    check_id(x);
    Node n;
    n.op = Op::Exp;
    n.name = std::move(name);
    n.args = {x};
    return push(std::move(n));
}

NodeId Tape::clamp_max(NodeId x, double cap, std::string name) {
    check_id(x);
    Node n;
    n.op = Op::ClampMax;
    n.name = std::move(name);
    n.args = {x};
    n.cap = cap;
    return push(std::move(n));
}

NodeId Tape::scale_by_scalar(NodeId m, NodeId scalar, std::string name) {
    check_id(m);
    check_id(scalar);
    Node n;
    n.op = Op::ScaleByScalar;
    n.name = std::move(name);
    n.args = {m, scalar};
    return push(std::move(n));
}

NodeId Tape::softmax_xent_diag(NodeId logits, std::string name) {
    check_id(logits);
    Node n;
    n.op = Op::SoftmaxXentDiag;
    n.name = std::move(name);
    n.args = {logits};
    return push(std::move(n));
}

NodeId Tape::flops_reduce(NodeId s, std::string name) {
    check_id(s);
    Node n;
    n.op = Op::FlopsReduce;
    n.name = std::move(name);
    n.args = {s};
    return push(std::move(n));
}

NodeId Tape::overuse_reduce(NodeId s, std::string name) {
    check_id(s);
    Node n;
    n.op = Op::OveruseReduce;
    n.name = std::move(name);
    n.args = {s};
    return push(std::move(n));
}

NodeId Tape::weighted_sum(std::vector<NodeId> terms, std::vector<double> coeffs,
                          std::string name) {
    if (terms.empty() || terms.size() != coeffs.size()) {
        throw std::invalid_argument("weighted_sum: terms/coeffs size mismatch");
    }
    for (NodeId t : terms) check_id(t);
    Node n;
    n.op = Op::WeightedSum;
    n.name = std::move(name);
    n.args = std::move(terms);
    n.coeffs = std::move(coeffs);
    return push(std::move(n));
}

void Tape::set_value(NodeId id, const Matrix& v) {
    check_id(id);
    Node& n = nodes_[id];
    if (n.op != Op::Input && n.op != Op::Param) {
        throw std::invalid_argument("set_value: node '" + n.name + "' is not a leaf");
    }
    if (!n.value.empty() && !n.value.same_shape(v)) {
        throw std::invalid_argument("set_value: shape mismatch on '" + n.name + "'");
    }
    n.value = v;
}

Matrix& Tape::mutable_value(NodeId id) {
    check_id(id);
    Node& n = nodes_[id];
    if (n.op != Op::Input && n.op != Op::Param) {
        throw std::invalid_argument("mutable_value: node '" + n.name + "' is not a leaf");
    }
    return n.value;
}

void Tape::set_coeff(NodeId id, std::size_t term, double coeff) {
    check_id(id);
    Node& n = nodes_[id];
    if (n.op != Op::WeightedSum || term >= n.coeffs.size()) {
        throw std::invalid_argument("set_coeff: bad weighted_sum term");
    }
    n.coeffs[term] = coeff;
}

void Tape::forward_node(Node& n) {
    switch (n.op) {
        case Op::Input:
        case Op::Param:
            break;
        case Op::MatMul:
            lexalign::matmul(nodes_[n.args[0]].value, nodes_[n.args[1]].value, n.value);
            break;
        case Op::MatMulNT:
            lexalign::matmul_nt(nodes_[n.args[0]].value, nodes_[n.args[1]].value, n.value);
            break;
        case Op::AddBias: {
            const Matrix& a = nodes_[n.args[0]].value;
            const Matrix& b = nodes_[n.args[1]].value;
            if (b.rows() != 1 || b.cols() != a.cols()) {
                throw std::invalid_argument("add_bias '" + n.name + "': bias must be 1x" +
                                            std::to_string(a.cols()));
            }
            n.value = a;
            for (std::size_t r = 0; r < a.rows(); ++r) {
                auto row = n.value.row(r);
                for (std::size_t c = 0; c < a.cols(); ++c) row[c] += b(0, c);
            }
            break;
        }
        case Op::Tanh: {
            n.value = nodes_[n.args[0]].value;
            for (double& v : n.value.data()) v = std::tanh(v);
            break;
        }
        case Op::Elu1p: {
            n.value = nodes_[n.args[0]].value;
            for (double& v : n.value.data()) v = v >= 0.0 ? v + 1.0 : std::exp(v);
            break;
        }
        case Op::SegmentColMax: {
            const Matrix& x = nodes_[n.args[0]].value;
            const std::size_t p = n.segment;
            if (x.rows() % p != 0) {
                throw std::invalid_argument("segment_col_max '" + n.name +
                                            "': rows not divisible by segment size");
            }
            const std::size_t segs = x.rows() / p, cols = x.cols();
            if (n.value.rows() != segs || n.value.cols() != cols) n.value = Matrix(segs, cols);
            n.argmax.assign(segs * cols, 0);
            for (std::size_t s = 0; s < segs; ++s) {
                for (std::size_t c = 0; c < cols; ++c) {
                    std::size_t best = s * p;
                    double bv = x(best, c);
                    for (std::size_t r = s * p + 1; r < (s + 1) * p; ++r) {
                        // strict > keeps the lowest row on ties
                        if (x(r, c) > bv) {
                            bv = x(r, c);
                            best = r;
                        }
                    }
                    n.value(s, c) = bv;
                    n.argmax[s * cols + c] = static_cast<std::uint32_t>(best);
                }
            }
            break;
        }
        case Op::RowL2Normalize: {
            const Matrix& x = nodes_[n.args[0]].value;
            n.value = x;
            n.scratch.assign(x.rows(), 0.0);
            for (std::size_t r = 0; r < x.rows(); ++r) {
                double acc = 0.0;
                auto row = x.row(r);
                for (double v : row) acc += v * v;
                const double norm = std::sqrt(acc);
                if (!(norm >= 1e-12)) {
                    throw std::runtime_error("row_l2_normalize '" + n.name +
                                             "': zero-norm row " + std::to_string(r));
                }
                n.scratch[r] = norm;
                const double inv = 1.0 / norm;
                auto out = n.value.row(r);
                for (double& v : out) v *= inv;
            }
            break;
        }
        case Op::Transpose:
            n.value = lexalign::transpose(nodes_[n.args[0]].value);
            break;
        case Op::Exp: {
            n.value = nodes_[n.args[0]].value;
            for (double& v : n.value.data()) v = std::exp(v);
            break;
        }
        case Op::ClampMax: {
            n.value = nodes_[n.args[0]].value;
            for (double& v : n.value.data()) v = std::min(v, n.cap);
            break;
        }
        case Op::ScaleByScalar: {
            const Matrix& a = nodes_[n.args[0]].value;
            const Matrix& s = nodes_[n.args[1]].value;
            if (!is_scalar(s)) {
                throw std::invalid_argument("scale_by_scalar '" + n.name +
                                            "': scale is not 1x1");
            }
            n.value = a;
            const double sc = s(0, 0);
            for (double& v : n.value.data()) v *= sc;
            break;
        }
        case Op::SoftmaxXentDiag: {
            const Matrix& logits = nodes_[n.args[0]].value;
            const std::size_t rows = logits.rows();
            if (rows < 2 || logits.cols() != rows) {
                throw std::invalid_argument("softmax_xent_diag '" + n.name +
                                            "': needs a square NxN matrix, N >= 2");
            }
            n.scratch.assign(rows * rows, 0.0);
            double loss = 0.0;
            for (std::size_t i = 0; i < rows; ++i) {
                auto row = logits.row(i);
                double mx = row[0];
                for (double v : row) mx = std::max(mx, v);
                double denom = 0.0;
                for (std::size_t j = 0; j < rows; ++j) {
                    const double e = std::exp(row[j] - mx);
                    n.scratch[i * rows + j] = e;
                    denom += e;
                }
                const double inv = 1.0 / denom;
                for (std::size_t j = 0; j < rows; ++j) n.scratch[i * rows + j] *= inv;
                loss += std::log(denom) + mx - row[i];
            }
            if (n.value.rows() != 1 || n.value.cols() != 1) n.value = Matrix(1, 1);
            n.value(0, 0) = loss / static_cast<double>(rows);
            break;
        }
        case Op::FlopsReduce:
        case Op::OveruseReduce: {
            const Matrix& s = nodes_[n.args[0]].value;
            const std::size_t rows = s.rows(), cols = s.cols();
            n.scratch.assign(cols, 0.0);
            for (std::size_t i = 0; i < rows; ++i) {
                auto row = s.row(i);
                for (std::size_t j = 0; j < cols; ++j) n.scratch[j] += row[j];
            }
            const double invn = 1.0 / static_cast<double>(rows);
            for (double& m : n.scratch) m *= invn;
            if (n.value.rows() != 1 || n.value.cols() != 1) n.value = Matrix(1, 1);
            if (n.op == Op::FlopsReduce) {
                double acc = 0.0;
                for (double m : n.scratch) acc += m * m;
                n.value(0, 0) = acc;
            } else {
                double total = 0.0, cubes = 0.0;
                for (double m : n.scratch) {
                    total += m;
                    cubes += m * m * m;
                }
                if (!(total > 0.0)) {
                    throw std::runtime_error("overuse_reduce '" + n.name +
                                             "': all-zero batch (undefined)");
                }
                n.value(0, 0) = static_cast<double>(cols) * cubes / total;
            }
            break;
        }
        case Op::WeightedSum: {
            double acc = 0.0;
            for (std::size_t k = 0; k < n.args.size(); ++k) {
                const Matrix& t = nodes_[n.args[k]].value;
                if (!is_scalar(t)) {
                    throw std::invalid_argument("weighted_sum '" + n.name +
                                                "': term is not scalar");
                }
                acc += n.coeffs[k] * t(0, 0);
            }
            if (n.value.rows() != 1 || n.value.cols() != 1) n.value = Matrix(1, 1);
            n.value(0, 0) = acc;
            break;
        }
    }
    if (!n.value.all_finite()) {
        throw std::runtime_error("non-finite value in node '" + n.name + "'");
    }
}

double Tape::forward() {
    if (nodes_.empty()) throw std::invalid_argument("Tape: empty graph");
    for (Node& n : nodes_) forward_node(n);
    const Matrix& out = nodes_.back().value;
    if (!is_scalar(out)) {
        throw std::invalid_argument("Tape: final node '" + nodes_.back().name +
                                    "' is not scalar");
    }
    return out(0, 0);
}

void Tape::backward_node(Node& n) {
    const Matrix& u = n.adjoint;
    switch (n.op) {
        case Op::Input:
        case Op::Param:
            break;
        case Op::MatMul: {
            Node& a = nodes_[n.args[0]];
            Node& b = nodes_[n.args[1]];
            Matrix da = lexalign::matmul_nt(u, b.value);
            Matrix db;
            matmul_tn(a.value, u, db);
            for (std::size_t i = 0; i < da.size(); ++i) a.adjoint.data()[i] += da.data()[i];
            for (std::size_t i = 0; i < db.size(); ++i) b.adjoint.data()[i] += db.data()[i];
            break;
        }
        case Op::MatMulNT: {
            Node& a = nodes_[n.args[0]];
            Node& b = nodes_[n.args[1]];
            Matrix da = lexalign::matmul(u, b.value);
            Matrix db;
            matmul_tn(u, a.value, db);
            for (std::size_t i = 0; i < da.size(); ++i) a.adjoint.data()[i] += da.data()[i];
            for (std::size_t i = 0; i < db.size(); ++i) b.adjoint.data()[i] += db.data()[i];
            break;
        }
        case Op::AddBias: {
            Node& a = nodes_[n.args[0]];
            Node& b = nodes_[n.args[1]];
            for (std::size_t i = 0; i < u.size(); ++i) a.adjoint.data()[i] += u.data()[i];
            for (std::size_t r = 0; r < u.rows(); ++r) {
                auto row = u.row(r);
                for (std::size_t c = 0; c < u.cols(); ++c) b.adjoint(0, c) += row[c];
            }
            break;
        }
        case Op::Tanh: {
            Node& x = nodes_[n.args[0]];
            for (std::size_t i = 0; i < u.size(); ++i) {
                const double y = n.value.data()[i];
                x.adjoint.data()[i] += u.data()[i] * (1.0 - y * y);
            }
            break;
        }
        case Op::Elu1p: {
            Node& x = nodes_[n.args[0]];
            for (std::size_t i = 0; i < u.size(); ++i) {
                const double xi = x.value.data()[i];
                // derivative is 1 on the shifted branch, e^x (= value) below 0
                x.adjoint.data()[i] += u.data()[i] * (xi >= 0.0 ? 1.0 : n.value.data()[i]);
            }
            break;
        }
        case Op::SegmentColMax: {
            Node& x = nodes_[n.args[0]];
            const std::size_t cols = n.value.cols();
            for (std::size_t s = 0; s < n.value.rows(); ++s) {
                for (std::size_t c = 0; c < cols; ++c) {
                    x.adjoint(n.argmax[s * cols + c], c) += u(s, c);
                }
            }
            break;
        }
        case Op::RowL2Normalize: {
            Node& x = nodes_[n.args[0]];
            for (std::size_t r = 0; r < u.rows(); ++r) {
                auto urow = u.row(r);
                auto yrow = n.value.row(r);
                double dot = 0.0;
                for (std::size_t c = 0; c < u.cols(); ++c) dot += urow[c] * yrow[c];
                const double inv = 1.0 / n.scratch[r];
                auto xadj = x.adjoint.row(r);
                for (std::size_t c = 0; c < u.cols(); ++c) {
                    xadj[c] += (urow[c] - dot * yrow[c]) * inv;
                }
            }
            break;
        }
        case Op::Transpose: {
            Node& x = nodes_[n.args[0]];
            for (std::size_t r = 0; r < u.rows(); ++r)
                for (std::size_t c = 0; c < u.cols(); ++c) x.adjoint(c, r) += u(r, c);
            break;
        }
        case Op::Exp: {
            Node& x = nodes_[n.args[0]];
            for (std::size_t i = 0; i < u.size(); ++i) {
                x.adjoint.data()[i] += u.data()[i] * n.value.data()[i];
            }
            break;
        }
        case Op::ClampMax: {
            Node& x = nodes_[n.args[0]];
            for (std::size_t i = 0; i < u.size(); ++i) {
                if (x.value.data()[i] <= n.cap) x.adjoint.data()[i] += u.data()[i];
            }
            break;
        }
        case Op::ScaleByScalar: {
            Node& a = nodes_[n.args[0]];
            Node& s = nodes_[n.args[1]];
            const double sc = s.value(0, 0);
            double sdot = 0.0;
            for (std::size_t i = 0; i < u.size(); ++i) {
                a.adjoint.data()[i] += u.data()[i] * sc;
                sdot += u.data()[i] * a.value.data()[i];
            }
            s.adjoint(0, 0) += sdot;
            break;
        }
        case Op::SoftmaxXentDiag: {
            Node& l = nodes_[n.args[0]];
            const std::size_t rows = l.value.rows();
            const double g = u(0, 0) / static_cast<double>(rows);
            for (std::size_t i = 0; i < rows; ++i) {
                for (std::size_t j = 0; j < rows; ++j) {
                    double p = n.scratch[i * rows + j];
                    if (i == j) p -= 1.0;
                    l.adjoint(i, j) += g * p;
                }
            }
            break;
        }
        case Op::FlopsReduce: {
            Node& s = nodes_[n.args[0]];
            const double g = u(0, 0) / static_cast<double>(s.value.rows());
            for (std::size_t i = 0; i < s.value.rows(); ++i) {
                auto adj = s.adjoint.row(i);
                for (std::size_t j = 0; j < s.value.cols(); ++j) {
                    adj[j] += g * 2.0 * n.scratch[j];
                }
            }
            break;
        }
        case Op::OveruseReduce: {
            Node& s = nodes_[n.args[0]];
            const auto cols = static_cast<double>(s.value.cols());
            double total = 0.0, cubes = 0.0;
            for (double m : n.scratch) {
                total += m;
                cubes += m * m * m;
            }
            const double g = u(0, 0) / static_cast<double>(s.value.rows());
            for (std::size_t i = 0; i < s.value.rows(); ++i) {
                auto adj = s.adjoint.row(i);
                for (std::size_t j = 0; j < s.value.cols(); ++j) {
                    const double m = n.scratch[j];
                    const double dfdm = cols * (3.0 * m * m * total - cubes) / (total * total);
                    adj[j] += g * dfdm;
                }
            }
            break;
        }
        case Op::WeightedSum: {
            for (std::size_t k = 0; k < n.args.size(); ++k) {
                nodes_[n.args[k]].adjoint(0, 0) += n.coeffs[k] * u(0, 0);
            }
            break;
        }
    }
}

double Tape::forward_backward() {
    const double loss = forward();
    for (Node& n : nodes_) {
        if (!n.adjoint.same_shape(n.value)) {
            n.adjoint = Matrix(n.value.rows(), n.value.cols());
        } else {
            n.adjoint.fill(0.0);
        }
    }
    nodes_.back().adjoint(0, 0) = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) backward_node(nodes_[i]);
    return loss;
}

std::vector<std::uint32_t> Tape::pool_argmax_snapshot() const {
    std::vector<std::uint32_t> out;
    for (const Node& n : nodes_) {
        if (n.op == Op::SegmentColMax) out.insert(out.end(), n.argmax.begin(), n.argmax.end());
    }
    return out;
}

double forward_backward(Tape& tape) { return tape.forward_backward(); }

std::vector<double> finite_diff(const std::function<double(const std::vector<double>&)>& f,
                                const std::vector<double>& x, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("finite_diff: eps must be positive");
    std::vector<double> grad(x.size(), 0.0);
    std::vector<double> probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + eps;
        const double up = f(probe);
        probe[i] = x[i] - eps;
        const double down = f(probe);
        probe[i] = x[i];
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw std::runtime_error("finite_diff: non-finite function value at coordinate " +
                                     std::to_string(i));
        }
        grad[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

bool GradReport::all_pass() const {
    for (const auto& p : params) {
        if (!p.pass) return false;
    }
    return true;
}

std::size_t GradReport::total_skipped() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.coords_skipped;
    return n;
}

std::string GradReport::to_table() const {
    std::ostringstream os;
    os << "parameter                 max_rel_err   mean_rel_err   checked  skipped  status\n";
    for (const auto& p : params) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-24s  %12.4e  %12.4e  %7zu  %7zu  %s\n",
                      p.name.c_str(), p.max_rel_err, p.mean_rel_err, p.coords_checked,
                      p.coords_skipped, p.pass ? "ok" : "FAIL");
        os << line;
    }
    os << "eps=" << eps << " tol=" << tol << "\n";
    return os.str();
}

GradReport grad_check(Tape& tape, const std::vector<NodeId>& params, double eps, double tol) {
    GradReport report;
    report.eps = eps;
    report.tol = tol;

    tape.forward_backward();
    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (NodeId p : params) analytic.push_back(tape.adjoint(p));

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const NodeId p = params[pi];
        ParamGradCheck check;
        check.name = tape.name(p);
        double err_sum = 0.0;
        Matrix& val = tape.mutable_value(p);
        for (std::size_t i = 0; i < val.size(); ++i) {
            const double orig = val.data()[i];
            val.data()[i] = orig + eps;
            const double up = tape.forward();
            const auto argmax_up = tape.pool_argmax_snapshot();
            val.data()[i] = orig - eps;
            const double down = tape.forward();
            const auto argmax_down = tape.pool_argmax_snapshot();
            val.data()[i] = orig;
            if (argmax_up != argmax_down) {
                // the probe straddles a max-pool kink: central difference is
                // meaningless here
                ++check.coords_skipped;
                continue;
            }
            const double fd = (up - down) / (2.0 * eps);
            const double an = analytic[pi].data()[i];
            const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-6});
            const double rel = std::fabs(fd - an) / denom;
            check.max_rel_err = std::max(check.max_rel_err, rel);
            err_sum += rel;
            ++check.coords_checked;
        }
        if (check.coords_checked > 0) {
            check.mean_rel_err = err_sum / static_cast<double>(check.coords_checked);
        }
        check.pass = check.max_rel_err <= tol;
        report.params.push_back(std::move(check));
    }
    // restore adjoints to the unperturbed state
    tape.forward_backward();
    return report;
}

}  // namespace lexalign
