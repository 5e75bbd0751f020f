#include "primfit/autodiff.hpp"

#include "primfit/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace primfit {

namespace {

constexpr double kSqrtFloor = 1e-12;

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_error(OpKind kind, const Matrix& a, const Matrix& b) {
  throw ValidationError("autodiff: " + to_string(kind) + " cannot combine shapes " +
                        shape_str(a) + " and " + shape_str(b));
}

Eigen::Index broadcast_extent(Eigen::Index a, Eigen::Index b, bool& ok) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  ok = false;
  return 0;
}

Matrix expand(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return m.replicate(rows / m.rows(), cols / m.cols());
}

// Sums a broadcast gradient back down to the shape of the original operand.
void accumulate_reduced(Matrix& target, const Matrix& g) {
  if (target.rows() == g.rows() && target.cols() == g.cols()) {
    target += g;
  } else if (target.rows() == 1 && target.cols() == 1) {
    target(0, 0) += g.sum();
  } else if (target.rows() == 1) {
    target += g.colwise().sum();
  } else {
    target += g.rowwise().sum();
  }
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_scalar(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

Eigen::Vector3d row3(const Matrix& m, Eigen::Index r) {
  return m.row(std::min(r, m.rows() - 1)).transpose();
}

}  // namespace

std::string to_string(OpKind kind) {
  switch (kind) {
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "subtract";
    case OpKind::kMul: return "multiply";
    case OpKind::kDiv: return "divide";
    case OpKind::kPow: return "power";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftplus: return "softplus";
    case OpKind::kSin: return "sin";
    case OpKind::kCos: return "cos";
    case OpKind::kAbs: return "abs";
    case OpKind::kNeg: return "negate";
    case OpKind::kDot: return "dot";
    case OpKind::kCross: return "cross";
    case OpKind::kNorm: return "norm";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kSum: return "sum";
    case OpKind::kClampMin: return "clamp_min";
    case OpKind::kMin: return "min";
  }
  return "unknown";
}

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ValidationError("autodiff: scalar() on " + shape_str(v) + " node");
  return v(0, 0);
}

Var Tape::push(Node node) {
  node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(const Var& v) const {
  if (!v.valid() || &v.tape() != this || v.id() >= nodes_.size()) {
    throw ValidationError("autodiff: variable does not belong to this tape");
  }
}

Var Tape::leaf(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.op = "leaf";
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.op = "constant";
  return push(std::move(n));
}

Var Tape::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

const Matrix& Tape::grad(std::size_t id) const { return nodes_[id].grad; }

Var Tape::custom(std::string name, std::span<const Var> inputs, Matrix value, Adjoint adjoint) {
  Node n;
  n.value = std::move(value);
  n.op = std::move(name);
  n.adjoint = std::move(adjoint);
  for (const Var& v : inputs) {
    check_owned(v);
    n.parents.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  return push(std::move(n));
}

Var Tape::record(OpKind kind, std::span<const Var> inputs, double param) {
  for (const Var& v : inputs) check_owned(v);
  const auto arity = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw ValidationError("autodiff: " + to_string(kind) + " expects " + std::to_string(n) +
                            " inputs, got " + std::to_string(inputs.size()));
    }
  };

  switch (kind) {
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul:
    case OpKind::kDiv:
    case OpKind::kMin: {
      arity(2);
      const Matrix& a = value(inputs[0].id());
      const Matrix& b = value(inputs[1].id());
      bool ok = true;
      const Eigen::Index r = broadcast_extent(a.rows(), b.rows(), ok);
      const Eigen::Index c = broadcast_extent(a.cols(), b.cols(), ok);
      if (!ok) shape_error(kind, a, b);
      const Matrix ea = expand(a, r, c);
      const Matrix eb = expand(b, r, c);
      Matrix out;
      switch (kind) {
        case OpKind::kAdd: out = ea + eb; break;
        case OpKind::kSub: out = ea - eb; break;
        case OpKind::kMul: out = ea.cwiseProduct(eb); break;
        case OpKind::kDiv: out = ea.cwiseQuotient(eb); break;
        default: out = ea.cwiseMin(eb); break;
      }
      return custom(to_string(kind), inputs, std::move(out), [kind](const BackwardArgs& args) {
        const Matrix& g = args.out_grad;
        const Eigen::Index r = g.rows(), c = g.cols();
        if (kind == OpKind::kAdd || kind == OpKind::kSub) {
          if (args.in_grads[0]) accumulate_reduced(*args.in_grads[0], g);
          if (args.in_grads[1]) {
            accumulate_reduced(*args.in_grads[1], kind == OpKind::kAdd ? g : Matrix(-g));
          }
          return;
        }
        const Matrix ea = expand(*args.inputs[0], r, c);
        const Matrix eb = expand(*args.inputs[1], r, c);
        if (kind == OpKind::kMul) {
          if (args.in_grads[0]) accumulate_reduced(*args.in_grads[0], g.cwiseProduct(eb));
          if (args.in_grads[1]) accumulate_reduced(*args.in_grads[1], g.cwiseProduct(ea));
        } else if (kind == OpKind::kDiv) {
          if (args.in_grads[0]) accumulate_reduced(*args.in_grads[0], g.cwiseQuotient(eb));
          if (args.in_grads[1]) {
            const Matrix gb = -(g.cwiseProduct(args.output)).cwiseQuotient(eb);
            accumulate_reduced(*args.in_grads[1], gb);
          }
        } else {
          // Ties route the gradient to the first operand.
          const Matrix take_a = (ea.array() <= eb.array()).cast<double>().matrix();
          if (args.in_grads[0]) accumulate_reduced(*args.in_grads[0], g.cwiseProduct(take_a));
          if (args.in_grads[1]) {
            const Matrix take_b = Matrix::Ones(r, c) - take_a;
            accumulate_reduced(*args.in_grads[1], g.cwiseProduct(take_b));
          }
        }
      });
    }

    case OpKind::kPow:
    case OpKind::kSqrt:
    case OpKind::kSigmoid:
    case OpKind::kSoftplus:
    case OpKind::kSin:
    case OpKind::kCos:
    case OpKind::kAbs:
    case OpKind::kNeg:
    case OpKind::kClampMin: {
      arity(1);
      const Matrix& a = value(inputs[0].id());
      Matrix out(a.rows(), a.cols());
      switch (kind) {
        case OpKind::kPow: out = a.array().pow(param).matrix(); break;
        case OpKind::kSqrt: out = a.array().max(0.0).sqrt().matrix(); break;
        case OpKind::kSigmoid: out = a.unaryExpr(&sigmoid_scalar); break;
        case OpKind::kSoftplus: out = a.unaryExpr(&softplus_scalar); break;
        case OpKind::kSin: out = a.array().sin().matrix(); break;
        case OpKind::kCos: out = a.array().cos().matrix(); break;
        case OpKind::kAbs: out = a.cwiseAbs(); break;
        case OpKind::kNeg: out = -a; break;
        default: out = a.array().max(param).matrix(); break;
      }
      return custom(to_string(kind), inputs, std::move(out),
                    [kind, param](const BackwardArgs& args) {
                      if (!args.in_grads[0]) return;
                      const Matrix& x = *args.inputs[0];
                      const Matrix& y = args.output;
                      const Matrix& g = args.out_grad;
                      Matrix d(x.rows(), x.cols());
                      switch (kind) {
                        case OpKind::kPow:
                          d = (param * x.array().pow(param - 1.0)).matrix();
                          break;
                        case OpKind::kSqrt:
                          d = (0.5 / x.array().max(kSqrtFloor).sqrt()).matrix();
                          break;
                        case OpKind::kSigmoid:
                          d = (y.array() * (1.0 - y.array())).matrix();
                          break;
                        case OpKind::kSoftplus: d = x.unaryExpr(&sigmoid_scalar); break;
                        case OpKind::kSin: d = x.array().cos().matrix(); break;
                        case OpKind::kCos: d = (-x.array().sin()).matrix(); break;
                        case OpKind::kAbs:
                          d = x.unaryExpr([](double v) {
                            return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
                          });
                          break;
                        case OpKind::kNeg: d = Matrix::Constant(x.rows(), x.cols(), -1.0); break;
                        default: d = (x.array() >= param).cast<double>().matrix(); break;
                      }
                      *args.in_grads[0] += g.cwiseProduct(d);
                    });
    }

    case OpKind::kDot: {
      arity(2);
      const Matrix& a = value(inputs[0].id());
      const Matrix& b = value(inputs[1].id());
      bool ok = a.cols() == b.cols();
      const Eigen::Index r = broadcast_extent(a.rows(), b.rows(), ok);
      if (!ok) shape_error(kind, a, b);
      Matrix out = expand(a, r, a.cols()).cwiseProduct(expand(b, r, b.cols())).rowwise().sum();
      return custom("dot", inputs, std::move(out), [](const BackwardArgs& args) {
        const Matrix& g = args.out_grad;  // r x 1
        const Eigen::Index r = g.rows();
        const Matrix ea = expand(*args.inputs[0], r, args.inputs[0]->cols());
        const Matrix eb = expand(*args.inputs[1], r, args.inputs[1]->cols());
        if (args.in_grads[0]) {
          accumulate_reduced(*args.in_grads[0], eb.array().colwise() * g.col(0).array());
        }
        if (args.in_grads[1]) {
          accumulate_reduced(*args.in_grads[1], ea.array().colwise() * g.col(0).array());
        }
      });
    }

    case OpKind::kCross: {
      arity(2);
      const Matrix& a = value(inputs[0].id());
      const Matrix& b = value(inputs[1].id());
      bool ok = a.cols() == 3 && b.cols() == 3;
      const Eigen::Index r = broadcast_extent(a.rows(), b.rows(), ok);
      if (!ok) shape_error(kind, a, b);
      Matrix out(r, 3);
      for (Eigen::Index i = 0; i < r; ++i) {
        out.row(i) = row3(a, i).cross(row3(b, i)).transpose();
      }
      return custom("cross", inputs, std::move(out), [](const BackwardArgs& args) {
        const Matrix& g = args.out_grad;
        const Matrix& a = *args.inputs[0];
        const Matrix& b = *args.inputs[1];
        const Eigen::Index r = g.rows();
        Matrix ga = Matrix::Zero(r, 3), gb = Matrix::Zero(r, 3);
        for (Eigen::Index i = 0; i < r; ++i) {
          const Eigen::Vector3d gi = g.row(i).transpose();
          // d(a x b) = da x b + a x db; adjoints: b x g and g x a.
          ga.row(i) = row3(b, i).cross(gi).transpose();
          gb.row(i) = gi.cross(row3(a, i)).transpose();
        }
        if (args.in_grads[0]) accumulate_reduced(*args.in_grads[0], ga);
        if (args.in_grads[1]) accumulate_reduced(*args.in_grads[1], gb);
      });
    }

    case OpKind::kNorm: {
      arity(1);
      const Matrix& a = value(inputs[0].id());
      Matrix out = a.rowwise().norm();
      return custom("norm", inputs, std::move(out), [](const BackwardArgs& args) {
        if (!args.in_grads[0]) return;
        const Matrix& x = *args.inputs[0];
        const Eigen::ArrayXd denom =
            x.rowwise().squaredNorm().array().max(kSqrtFloor).sqrt();
        const Eigen::ArrayXd scale = args.out_grad.col(0).array() / denom;
        *args.in_grads[0] += (x.array().colwise() * scale).matrix();
      });
    }

    case OpKind::kMatMul: {
      arity(2);
      const Matrix& a = value(inputs[0].id());
      const Matrix& b = value(inputs[1].id());
      if (a.cols() != b.rows()) shape_error(kind, a, b);
      Matrix out = a * b;
      return custom("matmul", inputs, std::move(out), [](const BackwardArgs& args) {
        const Matrix& g = args.out_grad;
        if (args.in_grads[0]) *args.in_grads[0] += g * args.inputs[1]->transpose();
        if (args.in_grads[1]) *args.in_grads[1] += args.inputs[0]->transpose() * g;
      });
    }

    case OpKind::kSum: {
      arity(1);
      Matrix out = Matrix::Constant(1, 1, value(inputs[0].id()).sum());
      return custom("sum", inputs, std::move(out), [](const BackwardArgs& args) {
        if (args.in_grads[0]) args.in_grads[0]->array() += args.out_grad(0, 0);
      });
    }
  }
  throw ValidationError("autodiff: unsupported op");
}

void Tape::backward(const Var& root) {
  check_owned(root);
  const Matrix& rv = nodes_[root.id()].value;
  if (rv.rows() != 1 || rv.cols() != 1) {
    throw ValidationError("autodiff: backward requires a scalar root, got " + shape_str(rv));
  }
  for (Node& n : nodes_) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  nodes_[root.id()].grad(0, 0) = 1.0;

  std::vector<const Matrix*> in_values;
  std::vector<Matrix*> in_grads;
  for (std::size_t k = root.id() + 1; k-- > 0;) {
    Node& n = nodes_[k];
    if (!n.adjoint || !n.requires_grad) continue;
    if (n.grad.isZero(0.0)) continue;
    in_values.clear();
    in_grads.clear();
    for (std::size_t p : n.parents) {
      in_values.push_back(&nodes_[p].value);
      in_grads.push_back(nodes_[p].requires_grad ? &nodes_[p].grad : nullptr);
    }
    n.adjoint(BackwardArgs{in_values, n.value, n.grad, in_grads});
  }
}

// Expression helpers ---------------------------------------------------------

Var operator+(const Var& a, const Var& b) { return a.tape().record(OpKind::kAdd, {a, b}); }
Var operator-(const Var& a, const Var& b) { return a.tape().record(OpKind::kSub, {a, b}); }
Var operator*(const Var& a, const Var& b) { return a.tape().record(OpKind::kMul, {a, b}); }
Var operator/(const Var& a, const Var& b) { return a.tape().record(OpKind::kDiv, {a, b}); }
Var operator-(const Var& a) { return a.tape().record(OpKind::kNeg, {a}); }
Var operator+(const Var& a, double b) { return a + a.tape().constant(b); }
Var operator-(const Var& a, double b) { return a - a.tape().constant(b); }
Var operator*(const Var& a, double b) { return a * a.tape().constant(b); }
Var operator*(double a, const Var& b) { return b * b.tape().constant(a); }
Var operator+(double a, const Var& b) { return b + a; }
Var operator-(double a, const Var& b) { return b.tape().constant(a) - b; }
Var operator/(const Var& a, double b) { return a * a.tape().constant(1.0 / b); }

Var pow(const Var& a, double exponent) { return a.tape().record(OpKind::kPow, {a}, exponent); }
Var sqrt(const Var& a) { return a.tape().record(OpKind::kSqrt, {a}); }
Var sigmoid(const Var& a) { return a.tape().record(OpKind::kSigmoid, {a}); }
Var softplus(const Var& a) { return a.tape().record(OpKind::kSoftplus, {a}); }
Var sin(const Var& a) { return a.tape().record(OpKind::kSin, {a}); }
Var cos(const Var& a) { return a.tape().record(OpKind::kCos, {a}); }
Var abs(const Var& a) { return a.tape().record(OpKind::kAbs, {a}); }
Var dot_rows(const Var& a, const Var& b) { return a.tape().record(OpKind::kDot, {a, b}); }
Var cross_rows(const Var& a, const Var& b) { return a.tape().record(OpKind::kCross, {a, b}); }
Var norm_rows(const Var& a) { return a.tape().record(OpKind::kNorm, {a}); }
Var matmul(const Var& a, const Var& b) { return a.tape().record(OpKind::kMatMul, {a, b}); }
Var sum(const Var& a) { return a.tape().record(OpKind::kSum, {a}); }
Var clamp_min(const Var& a, double lo) { return a.tape().record(OpKind::kClampMin, {a}, lo); }
Var min(const Var& a, const Var& b) { return a.tape().record(OpKind::kMin, {a, b}); }

Var gather_rows(const Var& a, std::span<const Eigen::Index> rows) {
  const Matrix& v = a.value();
  Matrix out(static_cast<Eigen::Index>(rows.size()), v.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= v.rows()) {
      throw ValidationError("autodiff: gather_rows index " + std::to_string(rows[i]) +
                            " out of range for " + shape_str(v));
    }
    out.row(static_cast<Eigen::Index>(i)) = v.row(rows[i]);
  }
  std::vector<Eigen::Index> idx(rows.begin(), rows.end());
  const Var in[] = {a};
  return a.tape().custom("gather_rows", in, std::move(out),
                         [idx = std::move(idx)](const BackwardArgs& args) {
                           if (!args.in_grads[0]) return;
                           Matrix& g = *args.in_grads[0];
                           for (std::size_t i = 0; i < idx.size(); ++i) {
                             g.row(idx[i]) += args.out_grad.row(static_cast<Eigen::Index>(i));
                           }
                         });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ValidationError("autodiff: concat_rows of nothing");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) shape_error(OpKind::kAdd, parts.front().value(), p.value());
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return parts.front().tape().custom("concat_rows", parts, std::move(out),
                                     [](const BackwardArgs& args) {
                                       Eigen::Index at = 0;
                                       for (std::size_t k = 0; k < args.inputs.size(); ++k) {
                                         const Eigen::Index r = args.inputs[k]->rows();
                                         if (args.in_grads[k]) {
                                           *args.in_grads[k] += args.out_grad.middleRows(at, r);
                                         }
                                         at += r;
                                       }
                                     });
}

Var select_rows(const std::vector<bool>& mask, const Var& when_true, const Var& when_false) {
  const Matrix& t = when_true.value();
  const Matrix& f = when_false.value();
  if (t.rows() != f.rows() || t.cols() != f.cols() ||
      static_cast<Eigen::Index>(mask.size()) != t.rows()) {
    throw ValidationError("autodiff: select_rows shape mismatch " + shape_str(t) + " vs " +
                          shape_str(f));
  }
  Matrix out = f;
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    if (mask[static_cast<std::size_t>(r)]) out.row(r) = t.row(r);
  }
  const Var in[] = {when_true, when_false};
  return when_true.tape().custom("select_rows", in, std::move(out),
                                 [mask](const BackwardArgs& args) {
                                   for (Eigen::Index r = 0; r < args.out_grad.rows(); ++r) {
                                     const bool pick = mask[static_cast<std::size_t>(r)];
                                     Matrix* target = args.in_grads[pick ? 0 : 1];
                                     if (target) target->row(r) += args.out_grad.row(r);
                                   }
                                 });
}

double grad_check(const std::function<Var(Tape&, const Var&)>& f, const Matrix& x0,
                  double step) {
  Tape tape;
  const Var x = tape.leaf(x0);
  const Var y = f(tape, x);
  tape.backward(y);
  const Matrix analytic = x.grad();

  const auto eval = [&](const Matrix& at) {
    Tape t;
    return f(t, t.leaf(at)).scalar();
  };

  double worst = 0.0;
  Matrix probe = x0;
  for (Eigen::Index k = 0; k < x0.size(); ++k) {
    const double orig = probe(k);
    probe(k) = orig + step;
    const double up = eval(probe);
    probe(k) = orig - step;
    const double down = eval(probe);
    probe(k) = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double err = std::abs(analytic(k) - numeric) / std::max(1.0, std::abs(numeric));
    if (std::isnan(err)) return err;
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace primfit
