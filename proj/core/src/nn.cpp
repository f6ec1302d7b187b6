#include "tt/nn.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace tt::nn {

namespace {

int conv_out_size(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

// col is [(C*k*k) x (oh*ow)], row-major.
void im2col(const float* img, int channels, int h, int w, int kernel, int stride, int pad,
            float* col) {
  const int oh = conv_out_size(h, kernel, stride, pad);
  const int ow = conv_out_size(w, kernel, stride, pad);
  for (int c = 0; c < channels; ++c) {
    for (int kh = 0; kh < kernel; ++kh) {
      for (int kw = 0; kw < kernel; ++kw) {
        float* dst = col + (static_cast<std::size_t>(c) * kernel * kernel + kh * kernel + kw) *
                               oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + kh;
          if (iy < 0 || iy >= h) {
            std::fill(dst + oy * ow, dst + (oy + 1) * ow, 0.0f);
            continue;
          }
          const float* src_row = img + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kw;
            dst[oy * ow + ox] = (ix >= 0 && ix < w) ? src_row[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im(const float* col, int channels, int h, int w, int kernel, int stride, int pad,
            float* img) {
  const int oh = conv_out_size(h, kernel, stride, pad);
  const int ow = conv_out_size(w, kernel, stride, pad);
  std::fill(img, img + static_cast<std::size_t>(channels) * h * w, 0.0f);
  for (int c = 0; c < channels; ++c) {
    for (int kh = 0; kh < kernel; ++kh) {
      for (int kw = 0; kw < kernel; ++kw) {
        const float* src = col + (static_cast<std::size_t>(c) * kernel * kernel + kh * kernel +
                                  kw) *
                               oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + kh;
          if (iy < 0 || iy >= h) continue;
          float* dst_row = img + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kw;
            if (ix >= 0 && ix < w) dst_row[ix] += src[oy * ow + ox];
          }
        }
      }
    }
  }
}

float he_uniform_limit(int fan_in) { return std::sqrt(6.0f / static_cast<float>(fan_in)); }

void init_he_uniform(Tensor& t, int fan_in, std::mt19937& rng) {
  std::uniform_real_distribution<float> dist(-he_uniform_limit(fan_in), he_uniform_limit(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad,
               std::mt19937& rng, bool bias)
    : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride), pad_(pad),
      has_bias_(bias) {
  weight_.name = name + ".weight";
  weight_.value = Tensor({out_ch, in_ch, kernel, kernel});
  weight_.grad = Tensor({out_ch, in_ch, kernel, kernel});
  init_he_uniform(weight_.value, in_ch * kernel * kernel, rng);
  if (has_bias_) {
    bias_.name = name + ".bias";
    bias_.value = Tensor({out_ch});
    bias_.grad = Tensor({out_ch});
  }
}

Tensor Conv2d::forward(const std::vector<const Tensor*>& in, bool) {
  const Tensor& x = *in[0];
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  if (x.dim(1) != in_ch_) throw std::invalid_argument("Conv2d: channel mismatch");
  const int oh = conv_out_size(h, kernel_, stride_, pad_);
  const int ow = conv_out_size(w, kernel_, stride_, pad_);
  const int ckk = in_ch_ * kernel_ * kernel_;
  Tensor y({n, out_ch_, oh, ow});
  std::vector<float> col(static_cast<std::size_t>(ckk) * oh * ow);
  for (int s = 0; s < n; ++s) {
    const float* xs = x.data() + static_cast<std::size_t>(s) * in_ch_ * h * w;
    float* ys = y.data() + static_cast<std::size_t>(s) * out_ch_ * oh * ow;
    im2col(xs, in_ch_, h, w, kernel_, stride_, pad_, col.data());
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, out_ch_, oh * ow, ckk, 1.0f,
                weight_.value.data(), ckk, col.data(), oh * ow, 0.0f, ys, oh * ow);
    if (has_bias_) {
      for (int c = 0; c < out_ch_; ++c) {
        float b = bias_.value[c];
        float* row = ys + static_cast<std::size_t>(c) * oh * ow;
        for (int i = 0; i < oh * ow; ++i) row[i] += b;
      }
    }
  }
  return y;
}

std::vector<Tensor> Conv2d::backward(const std::vector<const Tensor*>& in,
                                     const Tensor& grad_out) {
  const Tensor& x = *in[0];
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int oh = grad_out.dim(2), ow = grad_out.dim(3);
  const int ckk = in_ch_ * kernel_ * kernel_;
  Tensor dx({n, in_ch_, h, w});
  std::vector<float> col(static_cast<std::size_t>(ckk) * oh * ow);
  std::vector<float> dcol(static_cast<std::size_t>(ckk) * oh * ow);
  for (int s = 0; s < n; ++s) {
    const float* xs = x.data() + static_cast<std::size_t>(s) * in_ch_ * h * w;
    const float* gys = grad_out.data() + static_cast<std::size_t>(s) * out_ch_ * oh * ow;
    im2col(xs, in_ch_, h, w, kernel_, stride_, pad_, col.data());
    // dW += gY * col^T
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, out_ch_, ckk, oh * ow, 1.0f, gys,
                oh * ow, col.data(), oh * ow, 1.0f, weight_.grad.data(), ckk);
    // dcol = W^T * gY
    cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, ckk, oh * ow, out_ch_, 1.0f,
                weight_.value.data(), ckk, gys, oh * ow, 0.0f, dcol.data(), oh * ow);
    col2im(dcol.data(), in_ch_, h, w, kernel_, stride_, pad_,
           dx.data() + static_cast<std::size_t>(s) * in_ch_ * h * w);
    if (has_bias_) {
      for (int c = 0; c < out_ch_; ++c) {
        const float* row = gys + static_cast<std::size_t>(c) * oh * ow;
        float acc = 0.0f;
        for (int i = 0; i < oh * ow; ++i) acc += row[i];
        bias_.grad[c] += acc;
      }
    }
  }
  std::vector<Tensor> grads;
  grads.push_back(std::move(dx));
  return grads;
}

std::vector<Param*> Conv2d::params() {
  if (has_bias_) return {&weight_, &bias_};
  return {&weight_};
}

// ---------------------------------------------------------------------------
// Deconv2x2 — with kernel 2 and stride 2 each output pixel receives exactly
// one contribution, so the op decomposes into four 1x1 convolutions.

Deconv2x2::Deconv2x2(std::string name, int in_ch, int out_ch, std::mt19937& rng)
    : in_ch_(in_ch), out_ch_(out_ch) {
  weight_.name = name + ".weight";
  weight_.value = Tensor({out_ch, in_ch, 2, 2});
  weight_.grad = Tensor({out_ch, in_ch, 2, 2});
  init_he_uniform(weight_.value, in_ch, rng);
  bias_.name = name + ".bias";
  bias_.value = Tensor({out_ch});
  bias_.grad = Tensor({out_ch});
}

Tensor Deconv2x2::forward(const std::vector<const Tensor*>& in, bool) {
  const Tensor& x = *in[0];
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  if (x.dim(1) != in_ch_) throw std::invalid_argument("Deconv2x2: channel mismatch");
  Tensor y({n, out_ch_, 2 * h, 2 * w});
  const int hw = h * w;
  std::vector<float> wsub(static_cast<std::size_t>(out_ch_) * in_ch_);
  std::vector<float> ysub(static_cast<std::size_t>(out_ch_) * hw);
  for (int dy = 0; dy < 2; ++dy) {
    for (int dx = 0; dx < 2; ++dx) {
      for (int co = 0; co < out_ch_; ++co)
        for (int ci = 0; ci < in_ch_; ++ci)
          wsub[static_cast<std::size_t>(co) * in_ch_ + ci] = weight_.value.at(co, ci, dy, dx);
      for (int s = 0; s < n; ++s) {
        const float* xs = x.data() + static_cast<std::size_t>(s) * in_ch_ * hw;
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, out_ch_, hw, in_ch_, 1.0f,
                    wsub.data(), in_ch_, xs, hw, 0.0f, ysub.data(), hw);
        for (int co = 0; co < out_ch_; ++co) {
          const float b = bias_.value[co];
          for (int iy = 0; iy < h; ++iy)
            for (int ix = 0; ix < w; ++ix)
              y.at(s, co, 2 * iy + dy, 2 * ix + dx) =
                  ysub[static_cast<std::size_t>(co) * hw + iy * w + ix] + b;
        }
      }
    }
  }
  return y;
}

std::vector<Tensor> Deconv2x2::backward(const std::vector<const Tensor*>& in,
                                        const Tensor& grad_out) {
  const Tensor& x = *in[0];
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int hw = h * w;
  Tensor dx({n, in_ch_, h, w});
  std::vector<float> gsub(static_cast<std::size_t>(out_ch_) * hw);
  std::vector<float> wsub(static_cast<std::size_t>(out_ch_) * in_ch_);
  std::vector<float> dwsub(static_cast<std::size_t>(out_ch_) * in_ch_);
  for (int dy = 0; dy < 2; ++dy) {
    for (int dx2 = 0; dx2 < 2; ++dx2) {
      for (int co = 0; co < out_ch_; ++co)
        for (int ci = 0; ci < in_ch_; ++ci)
          wsub[static_cast<std::size_t>(co) * in_ch_ + ci] = weight_.value.at(co, ci, dy, dx2);
      std::fill(dwsub.begin(), dwsub.end(), 0.0f);
      for (int s = 0; s < n; ++s) {
        for (int co = 0; co < out_ch_; ++co)
          for (int iy = 0; iy < h; ++iy)
            for (int ix = 0; ix < w; ++ix)
              gsub[static_cast<std::size_t>(co) * hw + iy * w + ix] =
                  grad_out.at(s, co, 2 * iy + dy, 2 * ix + dx2);
        const float* xs = x.data() + static_cast<std::size_t>(s) * in_ch_ * hw;
        // dWsub += gsub * x^T
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, out_ch_, in_ch_, hw, 1.0f,
                    gsub.data(), hw, xs, hw, 1.0f, dwsub.data(), in_ch_);
        // dx += Wsub^T * gsub
        cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, in_ch_, hw, out_ch_, 1.0f,
                    wsub.data(), in_ch_, gsub.data(), hw, 1.0f,
                    dx.data() + static_cast<std::size_t>(s) * in_ch_ * hw, hw);
      }
      for (int co = 0; co < out_ch_; ++co)
        for (int ci = 0; ci < in_ch_; ++ci)
          weight_.grad.at(co, ci, dy, dx2) += dwsub[static_cast<std::size_t>(co) * in_ch_ + ci];
    }
  }
  const int oh = 2 * h, ow = 2 * w;
  for (int s = 0; s < n; ++s)
    for (int co = 0; co < out_ch_; ++co) {
      const float* row = grad_out.data() +
                         ((static_cast<std::size_t>(s) * out_ch_ + co) * oh) * ow;
      float acc = 0.0f;
      for (int i = 0; i < oh * ow; ++i) acc += row[i];
      bias_.grad[co] += acc;
    }
  std::vector<Tensor> grads;
  grads.push_back(std::move(dx));
  return grads;
}

std::vector<Param*> Deconv2x2::params() { return {&weight_, &bias_}; }

// ---------------------------------------------------------------------------
// Pooling

Tensor MaxPool::forward(const std::vector<const Tensor*>& in, bool) {
  const Tensor& x = *in[0];
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = conv_out_size(h, kernel_, stride_, pad_);
  const int ow = conv_out_size(w, kernel_, stride_, pad_);
  Tensor y({n, c, oh, ow});
  argmax_.assign(y.size(), -1);
  std::size_t oidx = 0;
  for (int s = 0; s < n; ++s)
    for (int ch = 0; ch < c; ++ch)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox, ++oidx) {
          float best = -std::numeric_limits<float>::infinity();
          int best_idx = -1;
          for (int ky = 0; ky < kernel_; ++ky) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < kernel_; ++kx) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix < 0 || ix >= w) continue;
              const float v = x.at(s, ch, iy, ix);
              if (v > best) {
                best = v;
                best_idx = ((s * c + ch) * h + iy) * w + ix;
              }
            }
          }
          y[oidx] = best;
          argmax_[oidx] = best_idx;
        }
  return y;
}

std::vector<Tensor> MaxPool::backward(const std::vector<const Tensor*>& in,
                                      const Tensor& grad_out) {
  Tensor dx(in[0]->shape());
  for (std::size_t i = 0; i < grad_out.size(); ++i)
    if (argmax_[i] >= 0) dx[argmax_[i]] += grad_out[i];
  std::vector<Tensor> grads;
  grads.push_back(std::move(dx));
  return grads;
}

Tensor AvgPool::forward(const std::vector<const Tensor*>& in, bool) {
  const Tensor& x = *in[0];
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = conv_out_size(h, kernel_, stride_, 0);
  const int ow = conv_out_size(w, kernel_, stride_, 0);
  Tensor y({n, c, oh, ow});
  const float inv = 1.0f / static_cast<float>(kernel_ * kernel_);
  for (int s = 0; s < n; ++s)
    for (int ch = 0; ch < c; ++ch)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          float acc = 0.0f;
          for (int ky = 0; ky < kernel_; ++ky)
            for (int kx = 0; kx < kernel_; ++kx)
              acc += x.at(s, ch, oy * stride_ + ky, ox * stride_ + kx);
          y.at(s, ch, oy, ox) = acc * inv;
        }
  return y;
}

std::vector<Tensor> AvgPool::backward(const std::vector<const Tensor*>& in,
                                      const Tensor& grad_out) {
  Tensor dx(in[0]->shape());
  const int n = dx.dim(0), c = dx.dim(1);
  const int oh = grad_out.dim(2), ow = grad_out.dim(3);
  const float inv = 1.0f / static_cast<float>(kernel_ * kernel_);
  for (int s = 0; s < n; ++s)
    for (int ch = 0; ch < c; ++ch)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const float g = grad_out.at(s, ch, oy, ox) * inv;
          for (int ky = 0; ky < kernel_; ++ky)
            for (int kx = 0; kx < kernel_; ++kx)
              dx.at(s, ch, oy * stride_ + ky, ox * stride_ + kx) += g;
        }
  std::vector<Tensor> grads;
  grads.push_back(std::move(dx));
  return grads;
}

// ---------------------------------------------------------------------------
// Activations

Tensor ReLU::forward(const std::vector<const Tensor*>& in, bool) {
  Tensor y = *in[0];
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] < 0.0f) y[i] = 0.0f;
  return y;
}

std::vector<Tensor> ReLU::backward(const std::vector<const Tensor*>& in,
                                   const Tensor& grad_out) {
  const Tensor& x = *in[0];
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0f ? grad_out[i] : 0.0f;
  std::vector<Tensor> grads;
  grads.push_back(std::move(dx));
  return grads;
}

Tensor Sigmoid::forward(const std::vector<const Tensor*>& in, bool) {
  Tensor y = *in[0];
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 1.0f / (1.0f + std::exp(-y[i]));
  return y;
}

std::vector<Tensor> Sigmoid::backward(const std::vector<const Tensor*>& in,
                                      const Tensor& grad_out) {
  const Tensor& x = *in[0];
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float s = 1.0f / (1.0f + std::exp(-x[i]));
    dx[i] = grad_out[i] * s * (1.0f - s);
  }
  std::vector<Tensor> grads;
  grads.push_back(std::move(dx));
  return grads;
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(std::string name, int channels, float momentum, float eps)
    : channels_(channels), momentum_(momentum), eps_(eps) {
  gamma_.name = name + ".gamma";
  gamma_.value = Tensor({channels});
  gamma_.value.fill(1.0f);
  gamma_.grad = Tensor({channels});
  beta_.name = name + ".beta";
  beta_.value = Tensor({channels});
  beta_.grad = Tensor({channels});
  running_mean_.name = name + ".running_mean";
  running_mean_.value = Tensor({channels});
  running_var_.name = name + ".running_var";
  running_var_.value = Tensor({channels});
  running_var_.value.fill(1.0f);
}

Tensor BatchNorm2d::forward(const std::vector<const Tensor*>& in, bool train) {
  const Tensor& x = *in[0];
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (c != channels_) throw std::invalid_argument("BatchNorm2d: channel mismatch");
  Tensor y(x.shape());
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const float cnt = static_cast<float>(n) * plane;
  batch_mean_.assign(c, 0.0f);
  batch_inv_std_.assign(c, 0.0f);
  for (int ch = 0; ch < c; ++ch) {
    float mean, var;
    if (train) {
      double acc = 0.0;
      for (int s = 0; s < n; ++s) {
        const float* p = x.data() + (static_cast<std::size_t>(s) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      }
      mean = static_cast<float>(acc / cnt);
      double vacc = 0.0;
      for (int s = 0; s < n; ++s) {
        const float* p = x.data() + (static_cast<std::size_t>(s) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mean;
          vacc += d * d;
        }
      }
      var = static_cast<float>(vacc / cnt);
      running_mean_.value[ch] = (1.0f - momentum_) * running_mean_.value[ch] + momentum_ * mean;
      running_var_.value[ch] = (1.0f - momentum_) * running_var_.value[ch] + momentum_ * var;
    } else {
      mean = running_mean_.value[ch];
      var = running_var_.value[ch];
    }
    const float inv_std = 1.0f / std::sqrt(var + eps_);
    batch_mean_[ch] = mean;
    batch_inv_std_[ch] = inv_std;
    const float g = gamma_.value[ch], b = beta_.value[ch];
    for (int s = 0; s < n; ++s) {
      const float* p = x.data() + (static_cast<std::size_t>(s) * c + ch) * plane;
      float* q = y.data() + (static_cast<std::size_t>(s) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) q[i] = g * (p[i] - mean) * inv_std + b;
    }
  }
  return y;
}

std::vector<Tensor> BatchNorm2d::backward(const std::vector<const Tensor*>& in,
                                          const Tensor& grad_out) {
  const Tensor& x = *in[0];
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const float cnt = static_cast<float>(n) * plane;
  Tensor dx(x.shape());
  for (int ch = 0; ch < c; ++ch) {
    const float mean = batch_mean_[ch], inv_std = batch_inv_std_[ch];
    const float g = gamma_.value[ch];
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int s = 0; s < n; ++s) {
      const float* xp = x.data() + (static_cast<std::size_t>(s) * c + ch) * plane;
      const float* gp = grad_out.data() + (static_cast<std::size_t>(s) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const float xhat = (xp[i] - mean) * inv_std;
        sum_dy += gp[i];
        sum_dy_xhat += gp[i] * xhat;
      }
    }
    gamma_.grad[ch] += static_cast<float>(sum_dy_xhat);
    beta_.grad[ch] += static_cast<float>(sum_dy);
    const float mdy = static_cast<float>(sum_dy / cnt);
    const float mdyx = static_cast<float>(sum_dy_xhat / cnt);
    for (int s = 0; s < n; ++s) {
      const float* xp = x.data() + (static_cast<std::size_t>(s) * c + ch) * plane;
      const float* gp = grad_out.data() + (static_cast<std::size_t>(s) * c + ch) * plane;
      float* dp = dx.data() + (static_cast<std::size_t>(s) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const float xhat = (xp[i] - mean) * inv_std;
        dp[i] = g * inv_std * (gp[i] - mdy - xhat * mdyx);
      }
    }
  }
  std::vector<Tensor> grads;
  grads.push_back(std::move(dx));
  return grads;
}

std::vector<Param*> BatchNorm2d::params() { return {&gamma_, &beta_}; }

// ---------------------------------------------------------------------------
// Concat

Tensor Concat::forward(const std::vector<const Tensor*>& in, bool) {
  const Tensor& a = *in[0];
  const Tensor& b = *in[1];
  const int n = a.dim(0), h = a.dim(2), w = a.dim(3);
  if (b.dim(0) != n || b.dim(2) != h || b.dim(3) != w)
    throw std::invalid_argument("Concat: spatial/batch mismatch " + a.shape_str() + " vs " +
                                b.shape_str());
  const int ca = a.dim(1), cb = b.dim(1);
  Tensor y({n, ca + cb, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int s = 0; s < n; ++s) {
    std::copy(a.data() + static_cast<std::size_t>(s) * ca * plane,
              a.data() + static_cast<std::size_t>(s + 1) * ca * plane,
              y.data() + static_cast<std::size_t>(s) * (ca + cb) * plane);
    std::copy(b.data() + static_cast<std::size_t>(s) * cb * plane,
              b.data() + static_cast<std::size_t>(s + 1) * cb * plane,
              y.data() + (static_cast<std::size_t>(s) * (ca + cb) + ca) * plane);
  }
  return y;
}

std::vector<Tensor> Concat::backward(const std::vector<const Tensor*>& in,
                                     const Tensor& grad_out) {
  const Tensor& a = *in[0];
  const Tensor& b = *in[1];
  const int n = a.dim(0), h = a.dim(2), w = a.dim(3);
  const int ca = a.dim(1), cb = b.dim(1);
  Tensor da(a.shape()), db(b.shape());
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int s = 0; s < n; ++s) {
    std::copy(grad_out.data() + static_cast<std::size_t>(s) * (ca + cb) * plane,
              grad_out.data() + (static_cast<std::size_t>(s) * (ca + cb) + ca) * plane,
              da.data() + static_cast<std::size_t>(s) * ca * plane);
    std::copy(grad_out.data() + (static_cast<std::size_t>(s) * (ca + cb) + ca) * plane,
              grad_out.data() + static_cast<std::size_t>(s + 1) * (ca + cb) * plane,
              db.data() + static_cast<std::size_t>(s) * cb * plane);
  }
  std::vector<Tensor> grads;
  grads.push_back(std::move(da));
  grads.push_back(std::move(db));
  return grads;
}

// ---------------------------------------------------------------------------
// Graph

int Graph::add(std::unique_ptr<Layer> layer, std::vector<int> inputs) {
  for (int i : inputs)
    if (i < 0 || i >= static_cast<int>(nodes_.size()))
      throw std::invalid_argument("Graph::add: bad input node");
  nodes_.emplace_back();
  ops_.push_back({std::move(layer), std::move(inputs), static_cast<int>(nodes_.size()) - 1});
  return static_cast<int>(nodes_.size()) - 1;
}

const Tensor& Graph::forward(const Tensor& x, bool train) {
  nodes_[0].value = x;
  last_forward_train_ = train;
  for (auto& op : ops_) {
    std::vector<const Tensor*> ins;
    ins.reserve(op.inputs.size());
    for (int i : op.inputs) ins.push_back(&nodes_[i].value);
    nodes_[op.output].value = op.layer->forward(ins, train);
  }
  return nodes_.back().value;
}

void Graph::backward(const Tensor& grad_out) {
  for (auto& node : nodes_) {
    node.grad = Tensor(node.value.shape());
  }
  nodes_.back().grad = grad_out;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    std::vector<const Tensor*> ins;
    ins.reserve(it->inputs.size());
    for (int i : it->inputs) ins.push_back(&nodes_[i].value);
    auto input_grads = it->layer->backward(ins, nodes_[it->output].grad);
    for (std::size_t k = 0; k < it->inputs.size(); ++k)
      nodes_[it->inputs[k]].grad.add_(input_grads[k]);
  }
}

void Graph::zero_grad() {
  for (Param* p : params()) p->grad.fill(0.0f);
}

std::vector<Param*> Graph::params() {
  std::vector<Param*> out;
  for (auto& op : ops_)
    for (Param* p : op.layer->params()) out.push_back(p);
  return out;
}

std::vector<Param*> Graph::buffers() {
  std::vector<Param*> out;
  for (auto& op : ops_)
    if (auto* bn = dynamic_cast<BatchNorm2d*>(op.layer.get()))
      for (Param* p : bn->buffers()) out.push_back(p);
  return out;
}

std::size_t Graph::param_count() {
  std::size_t n = 0;
  for (Param* p : params()) n += p->value.size();
  return n;
}

}  // namespace tt::nn
