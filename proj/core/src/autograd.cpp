#include "refsr/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "refsr/errors.hpp"

namespace refsr::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

bool needs_grad(const Var& v) { return v && v->requires_grad; }

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool any = false;
  for (const Var& p : parents) any = any || needs_grad(p);
  if (any) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return node;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ArgumentError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                        shape_string(b.shape()));
}

int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

// Row r of `cols` holds the k*k*Ci receptive field of output pixel r of sample n.
void im2col(const Tensor& x, int n, int k, int stride, int pad, Padding mode, int ho, int wo,
            double* cols) {
  const int H = x.h(), W = x.w(), C = x.c();
  const std::size_t row_len = static_cast<std::size_t>(k) * k * C;
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      double* row = cols + (static_cast<std::size_t>(oy) * wo + ox) * row_len;
      for (int ky = 0; ky < k; ++ky) {
        int iy = oy * stride - pad + ky;
        const bool y_in = iy >= 0 && iy < H;
        if (!y_in && mode == Padding::Replicate) iy = std::clamp(iy, 0, H - 1);
        for (int kx = 0; kx < k; ++kx) {
          int ix = ox * stride - pad + kx;
          const bool x_in = ix >= 0 && ix < W;
          if (!x_in && mode == Padding::Replicate) ix = std::clamp(ix, 0, W - 1);
          double* dst = row + (static_cast<std::size_t>(ky) * k + kx) * C;
          if ((y_in && x_in) || mode == Padding::Replicate)
            std::memcpy(dst, x.data() + x.index(n, iy, ix, 0), sizeof(double) * C);
          else
            std::fill(dst, dst + C, 0.0);
        }
      }
    }
  }
}

void col2im(const double* cols, int n, int k, int stride, int pad, Padding mode, int ho, int wo,
            Tensor& dx) {
  const int H = dx.h(), W = dx.w(), C = dx.c();
  const std::size_t row_len = static_cast<std::size_t>(k) * k * C;
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const double* row = cols + (static_cast<std::size_t>(oy) * wo + ox) * row_len;
      for (int ky = 0; ky < k; ++ky) {
        int iy = oy * stride - pad + ky;
        const bool y_in = iy >= 0 && iy < H;
        if (!y_in) {
          if (mode == Padding::Zero) continue;
          iy = std::clamp(iy, 0, H - 1);
        }
        for (int kx = 0; kx < k; ++kx) {
          int ix = ox * stride - pad + kx;
          const bool x_in = ix >= 0 && ix < W;
          if (!x_in) {
            if (mode == Padding::Zero) continue;
            ix = std::clamp(ix, 0, W - 1);
          }
          const double* src = row + (static_cast<std::size_t>(ky) * k + kx) * C;
          double* dst = &dx.at(n, iy, ix, 0);
          for (int c = 0; c < C; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

}  // namespace

void Node::accumulate(const Tensor& g) {
  if (grad.empty()) {
    grad = g;
  } else {
    grad += g;
  }
}

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor::zeros(value.shape());
  return grad;
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return node;
}

Var leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

void backward(const Var& root) {
  if (!root) throw ArgumentError("backward on null variable");
  if (root->value.size() != 1) throw ArgumentError("backward root must be a scalar");
  if (!root->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p && p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->accumulate(Tensor(root->value.shape(), 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad, Padding mode) {
  const Tensor& xv = x->value;
  const Tensor& wv = w->value;
  const int k = wv.n();
  if (wv.h() != k) throw ArgumentError("conv2d: kernel must be square");
  if (wv.w() != xv.c())
    throw ArgumentError("conv2d: input has " + std::to_string(xv.c()) +
                        " channels, kernel expects " + std::to_string(wv.w()));
  const int co = wv.c();
  if (b && (b->value.size() != static_cast<std::size_t>(co)))
    throw ArgumentError("conv2d: bias size mismatch");
  if (stride < 1 || pad < 0) throw ArgumentError("conv2d: bad stride/padding");
  const int ho = conv_out(xv.h(), k, stride, pad);
  const int wo = conv_out(xv.w(), k, stride, pad);
  if (ho < 1 || wo < 1)
    throw ArgumentError("conv2d: input " + shape_string(xv.shape()) + " too small for kernel");

  const int N = xv.n();
  const int K = k * k * xv.c();
  const int P = ho * wo;
  const bool direct = (k == 1 && stride == 1 && pad == 0);

  Tensor out({N, ho, wo, co});
  CMapMat wmat(wv.data(), K, co);
  RowMat cols;
  if (!direct) cols.resize(P, K);
  for (int n = 0; n < N; ++n) {
    MapMat o(out.data() + static_cast<std::size_t>(n) * P * co, P, co);
    if (direct) {
      o.noalias() = CMapMat(xv.data() + static_cast<std::size_t>(n) * P * K, P, K) * wmat;
    } else {
      im2col(xv, n, k, stride, pad, mode, ho, wo, cols.data());
      o.noalias() = cols * wmat;
    }
    if (b) o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b->value.data(), co);
  }

  std::vector<Var> parents{x, w};
  if (b) parents.push_back(b);
  return make_node(std::move(out), std::move(parents),
                   [k, stride, pad, mode, ho, wo, N, K, P, co, direct](Node& self) {
                     const Var& x = self.parents[0];
                     const Var& w = self.parents[1];
                     const Var b = self.parents.size() > 2 ? self.parents[2] : nullptr;
                     const Tensor& xv = x->value;
                     CMapMat wmat(w->value.data(), K, co);
                     RowMat cols, dcols;
                     if (!direct) cols.resize(P, K);
                     for (int n = 0; n < N; ++n) {
                       CMapMat dout(self.grad.data() + static_cast<std::size_t>(n) * P * co, P,
                                    co);
                       const double* xcols = nullptr;
                       if (direct) {
                         xcols = xv.data() + static_cast<std::size_t>(n) * P * K;
                       } else if (w->requires_grad) {
                         im2col(xv, n, k, stride, pad, mode, ho, wo, cols.data());
                         xcols = cols.data();
                       }
                       if (w->requires_grad) {
                         MapMat dw(w->grad_buffer().data(), K, co);
                         dw.noalias() += CMapMat(xcols, P, K).transpose() * dout;
                       }
                       if (b && b->requires_grad) {
                         Eigen::Map<Eigen::RowVectorXd> db(b->grad_buffer().data(), co);
                         db += dout.colwise().sum();
                       }
                       if (x->requires_grad) {
                         Tensor& dx = x->grad_buffer();
                         if (direct) {
                           MapMat(dx.data() + static_cast<std::size_t>(n) * P * K, P, K)
                               .noalias() += dout * wmat.transpose();
                         } else {
                           dcols.noalias() = dout * wmat.transpose();
                           col2im(dcols.data(), n, k, stride, pad, mode, ho, wo, dx);
                         }
                       }
                     }
                   });
}

Var relu(const Var& x) { return leaky_relu(x, 0.0); }

Var leaky_relu(const Var& x, double slope) {
  Tensor out = x->value;
  for (double& v : out.storage())
    if (v < 0.0) v *= slope;
  return make_node(std::move(out), {x}, [slope](Node& self) {
    const Tensor& xv = self.parents[0]->value;
    Tensor g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv.data()[i] < 0.0) g.data()[i] *= slope;
    self.parents[0]->accumulate(g);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "add");
  Tensor out = a->value;
  out += b->value;
  return make_node(std::move(out), {a, b}, [](Node& self) {
    for (const Var& p : self.parents)
      if (p->requires_grad) p->accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "sub");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b->value.data()[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) {
      Tensor g = self.grad;
      g *= -1.0;
      self.parents[1]->accumulate(g);
    }
  });
}

Var scale(const Var& x, double s) { return affine(x, s, 0.0); }

Var affine(const Var& x, double a, double b) {
  Tensor out = x->value;
  for (double& v : out.storage()) v = a * v + b;
  return make_node(std::move(out), {x}, [a](Node& self) {
    Tensor g = self.grad;
    g *= a;
    self.parents[0]->accumulate(g);
  });
}

Var mul_const(const Var& x, const Tensor& m) {
  require_same_shape(x->value, m, "mul_const");
  Tensor out = x->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= m.data()[i];
  return make_node(std::move(out), {x}, [m](Node& self) {
    Tensor g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= m.data()[i];
    self.parents[0]->accumulate(g);
  });
}

Var sub_const(const Var& x, const Tensor& c) {
  require_same_shape(x->value, c, "sub_const");
  Tensor out = x->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= c.data()[i];
  return make_node(std::move(out), {x}, [](Node& self) { self.parents[0]->accumulate(self.grad); });
}

Var avg_pool2(const Var& x) {
  const Tensor& xv = x->value;
  const int N = xv.n(), ho = xv.h() / 2, wo = xv.w() / 2, C = xv.c();
  if (ho < 1 || wo < 1) throw ArgumentError("avg_pool2: input too small");
  Tensor out({N, ho, wo, C});
  for (int n = 0; n < N; ++n)
    for (int y = 0; y < ho; ++y)
      for (int xx = 0; xx < wo; ++xx)
        for (int c = 0; c < C; ++c)
          out.at(n, y, xx, c) = 0.25 * (xv.at(n, 2 * y, 2 * xx, c) + xv.at(n, 2 * y, 2 * xx + 1, c) +
                                        xv.at(n, 2 * y + 1, 2 * xx, c) +
                                        xv.at(n, 2 * y + 1, 2 * xx + 1, c));
  return make_node(std::move(out), {x}, [](Node& self) {
    Tensor& dx = self.parents[0]->grad_buffer();
    const Tensor& g = self.grad;
    for (int n = 0; n < g.n(); ++n)
      for (int y = 0; y < g.h(); ++y)
        for (int xx = 0; xx < g.w(); ++xx)
          for (int c = 0; c < g.c(); ++c) {
            const double v = 0.25 * g.at(n, y, xx, c);
            dx.at(n, 2 * y, 2 * xx, c) += v;
            dx.at(n, 2 * y, 2 * xx + 1, c) += v;
            dx.at(n, 2 * y + 1, 2 * xx, c) += v;
            dx.at(n, 2 * y + 1, 2 * xx + 1, c) += v;
          }
  });
}

Var max_pool2(const Var& x) {
  const Tensor& xv = x->value;
  const int N = xv.n(), ho = xv.h() / 2, wo = xv.w() / 2, C = xv.c();
  if (ho < 1 || wo < 1) throw ArgumentError("max_pool2: input too small");
  Tensor out({N, ho, wo, C});
  std::vector<std::size_t> argmax(out.size());
  for (int n = 0; n < N; ++n)
    for (int y = 0; y < ho; ++y)
      for (int xx = 0; xx < wo; ++xx)
        for (int c = 0; c < C; ++c) {
          std::size_t best = xv.index(n, 2 * y, 2 * xx, c);
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t i = xv.index(n, 2 * y + dy, 2 * xx + dx, c);
              if (xv.data()[i] > xv.data()[best]) best = i;
            }
          const std::size_t o = out.index(n, y, xx, c);
          out.data()[o] = xv.data()[best];
          argmax[o] = best;
        }
  return make_node(std::move(out), {x}, [argmax = std::move(argmax)](Node& self) {
    Tensor& dx = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < argmax.size(); ++o) dx.data()[argmax[o]] += self.grad.data()[o];
  });
}

Var pixel_shuffle(const Var& x, int r) {
  const Tensor& xv = x->value;
  if (r < 1 || xv.c() % (r * r) != 0)
    throw ArgumentError("pixel_shuffle: channels " + std::to_string(xv.c()) +
                        " not divisible by r^2");
  const int N = xv.n(), H = xv.h(), W = xv.w(), C = xv.c() / (r * r);
  Tensor out({N, H * r, W * r, C});
  for (int n = 0; n < N; ++n)
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx)
        for (int c = 0; c < C; ++c)
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j)
              out.at(n, y * r + i, xx * r + j, c) = xv.at(n, y, xx, c * r * r + i * r + j);
  return make_node(std::move(out), {x}, [r, N, H, W, C](Node& self) {
    Tensor& dx = self.parents[0]->grad_buffer();
    for (int n = 0; n < N; ++n)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx)
          for (int c = 0; c < C; ++c)
            for (int i = 0; i < r; ++i)
              for (int j = 0; j < r; ++j)
                dx.at(n, y, xx, c * r * r + i * r + j) +=
                    self.grad.at(n, y * r + i, xx * r + j, c);
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const Tensor& av = a->value;
  const Tensor& bv = b->value;
  if (av.n() != bv.n() || av.h() != bv.h() || av.w() != bv.w())
    throw ArgumentError("concat_channels: spatial mismatch " + shape_string(av.shape()) + " vs " +
                        shape_string(bv.shape()));
  const int ca = av.c(), cb = bv.c();
  const std::size_t pixels = static_cast<std::size_t>(av.n()) * av.h() * av.w();
  Tensor out({av.n(), av.h(), av.w(), ca + cb});
  for (std::size_t p = 0; p < pixels; ++p) {
    std::memcpy(out.data() + p * (ca + cb), av.data() + p * ca, sizeof(double) * ca);
    std::memcpy(out.data() + p * (ca + cb) + ca, bv.data() + p * cb, sizeof(double) * cb);
  }
  return make_node(std::move(out), {a, b}, [ca, cb, pixels](Node& self) {
    const Var& a = self.parents[0];
    const Var& b = self.parents[1];
    if (a->requires_grad) {
      Tensor& da = a->grad_buffer();
      for (std::size_t p = 0; p < pixels; ++p)
        for (int c = 0; c < ca; ++c) da.data()[p * ca + c] += self.grad.data()[p * (ca + cb) + c];
    }
    if (b->requires_grad) {
      Tensor& db = b->grad_buffer();
      for (std::size_t p = 0; p < pixels; ++p)
        for (int c = 0; c < cb; ++c)
          db.data()[p * cb + c] += self.grad.data()[p * (ca + cb) + ca + c];
    }
  });
}

Var global_avg_pool(const Var& x) {
  const Tensor& xv = x->value;
  const int N = xv.n(), C = xv.c();
  const int P = xv.h() * xv.w();
  Tensor out({N, 1, 1, C});
  for (int n = 0; n < N; ++n)
    for (int p = 0; p < P; ++p)
      for (int c = 0; c < C; ++c)
        out.data()[static_cast<std::size_t>(n) * C + c] +=
            xv.data()[(static_cast<std::size_t>(n) * P + p) * C + c];
  out *= 1.0 / P;
  return make_node(std::move(out), {x}, [N, C, P](Node& self) {
    Tensor& dx = self.parents[0]->grad_buffer();
    for (int n = 0; n < N; ++n)
      for (int p = 0; p < P; ++p)
        for (int c = 0; c < C; ++c)
          dx.data()[(static_cast<std::size_t>(n) * P + p) * C + c] +=
              self.grad.data()[static_cast<std::size_t>(n) * C + c] / P;
  });
}

Var haar_hh(const Var& x) {
  const Tensor& xv = x->value;
  if (xv.h() % 2 != 0 || xv.w() % 2 != 0)
    throw ArgumentError("haar_hh: odd spatial dims " + shape_string(xv.shape()));
  const int N = xv.n(), ho = xv.h() / 2, wo = xv.w() / 2, C = xv.c();
  Tensor out({N, ho, wo, C});
  for (int n = 0; n < N; ++n)
    for (int y = 0; y < ho; ++y)
      for (int xx = 0; xx < wo; ++xx)
        for (int c = 0; c < C; ++c)
          out.at(n, y, xx, c) = 0.5 * (xv.at(n, 2 * y, 2 * xx, c) - xv.at(n, 2 * y, 2 * xx + 1, c) -
                                       xv.at(n, 2 * y + 1, 2 * xx, c) +
                                       xv.at(n, 2 * y + 1, 2 * xx + 1, c));
  return make_node(std::move(out), {x}, [](Node& self) {
    Tensor& dx = self.parents[0]->grad_buffer();
    const Tensor& g = self.grad;
    for (int n = 0; n < g.n(); ++n)
      for (int y = 0; y < g.h(); ++y)
        for (int xx = 0; xx < g.w(); ++xx)
          for (int c = 0; c < g.c(); ++c) {
            const double v = 0.5 * g.at(n, y, xx, c);
            dx.at(n, 2 * y, 2 * xx, c) += v;
            dx.at(n, 2 * y, 2 * xx + 1, c) -= v;
            dx.at(n, 2 * y + 1, 2 * xx, c) -= v;
            dx.at(n, 2 * y + 1, 2 * xx + 1, c) += v;
          }
  });
}

Var gram(const Var& x) {
  const Tensor& xv = x->value;
  const int N = xv.n(), C = xv.c();
  const int P = xv.h() * xv.w();
  if (P == 0 || C == 0) throw ArgumentError("gram: empty feature map");
  Tensor out({N, C, C, 1});
  for (int n = 0; n < N; ++n) {
    CMapMat f(xv.data() + static_cast<std::size_t>(n) * P * C, P, C);
    MapMat g(out.data() + static_cast<std::size_t>(n) * C * C, C, C);
    g.noalias() = f.transpose() * f;
    g /= static_cast<double>(P);
    g.triangularView<Eigen::StrictlyLower>() = g.transpose();
  }
  return make_node(std::move(out), {x}, [N, C, P](Node& self) {
    const Tensor& xv = self.parents[0]->value;
    Tensor& dx = self.parents[0]->grad_buffer();
    for (int n = 0; n < N; ++n) {
      CMapMat f(xv.data() + static_cast<std::size_t>(n) * P * C, P, C);
      CMapMat dg(self.grad.data() + static_cast<std::size_t>(n) * C * C, C, C);
      RowMat sym = (dg + dg.transpose()) / static_cast<double>(P);
      MapMat(dx.data() + static_cast<std::size_t>(n) * P * C, P, C).noalias() += f * sym;
    }
  });
}

Var rms_per_sample(const Var& x) {
  const Tensor& xv = x->value;
  const int N = xv.n();
  const std::size_t M = xv.size() / static_cast<std::size_t>(N);
  Tensor out({N, 1, 1, 1});
  for (int n = 0; n < N; ++n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
      const double v = xv.data()[n * M + i];
      acc += v * v;
    }
    out.data()[n] = std::sqrt(acc / static_cast<double>(M));
  }
  return make_node(std::move(out), {x}, [N, M](Node& self) {
    const Tensor& xv = self.parents[0]->value;
    Tensor& dx = self.parents[0]->grad_buffer();
    for (int n = 0; n < N; ++n) {
      const double r = self.value.data()[n];
      if (r == 0.0) continue;  // subgradient 0 at the origin
      const double f = self.grad.data()[n] / (static_cast<double>(M) * r);
      for (std::size_t i = 0; i < M; ++i) dx.data()[n * M + i] += f * xv.data()[n * M + i];
    }
  });
}

Var rms_per_channel(const Var& x) {
  const Tensor& xv = x->value;
  const int N = xv.n(), C = xv.c();
  const int P = xv.h() * xv.w();
  Tensor out({N, 1, 1, C});
  for (int n = 0; n < N; ++n)
    for (int p = 0; p < P; ++p)
      for (int c = 0; c < C; ++c) {
        const double v = xv.data()[(static_cast<std::size_t>(n) * P + p) * C + c];
        out.data()[static_cast<std::size_t>(n) * C + c] += v * v;
      }
  for (double& v : out.storage()) v = std::sqrt(v / P);
  return make_node(std::move(out), {x}, [N, C, P](Node& self) {
    const Tensor& xv = self.parents[0]->value;
    Tensor& dx = self.parents[0]->grad_buffer();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const std::size_t o = static_cast<std::size_t>(n) * C + c;
        const double r = self.value.data()[o];
        if (r == 0.0) continue;
        const double f = self.grad.data()[o] / (P * r);
        for (int p = 0; p < P; ++p) {
          const std::size_t i = (static_cast<std::size_t>(n) * P + p) * C + c;
          dx.data()[i] += f * xv.data()[i];
        }
      }
  });
}

Var mean_abs_diff(const Var& x, const Tensor& target) {
  require_same_shape(x->value, target, "mean_abs_diff");
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) acc += std::abs(x->value.data()[i] - target.data()[i]);
  const double n = static_cast<double>(target.size());
  return make_node(Tensor::scalar(acc / n), {x}, [target, n](Node& self) {
    const Tensor& xv = self.parents[0]->value;
    Tensor g(xv.shape());
    const double s = self.grad.item() / n;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double d = xv.data()[i] - target.data()[i];
      g.data()[i] = d > 0 ? s : (d < 0 ? -s : 0.0);
    }
    self.parents[0]->accumulate(g);
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x->value.size());
  return scale(sum(x), 1.0 / n);
}

Var sum(const Var& x) {
  double acc = 0.0;
  for (double v : x->value.storage()) acc += v;
  return make_node(Tensor::scalar(acc), {x}, [](Node& self) {
    self.parents[0]->accumulate(Tensor(self.parents[0]->value.shape(), self.grad.item()));
  });
}

}  // namespace refsr::ag
