#include "lanerl/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace lanerl::net {

namespace {

constexpr char kMagic[8] = {'L', 'N', 'E', 'T', 'V', '0', '0', '1'};

void check_finite_dims(const std::vector<int>& dims) {
  if (dims.size() < 2) throw ShapeError("network needs at least input and output dims");
  for (int d : dims)
    if (d <= 0) throw ShapeError("non-positive layer width");
}

}  // namespace

Mlp make_mlp(const std::vector<int>& dims, Rng& rng) {
  check_finite_dims(dims);
  Mlp p;
  p.dims = dims;
  p.layers.resize(dims.size() - 1);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const int in = dims[l];
    const int out = dims[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Layer& layer = p.layers[l];
    layer.w = Mat(out, in);
    layer.b.assign(out, 0.0);
    for (double& w : layer.w.v) w = rng.uniform(-bound, bound);
    for (double& b : layer.b) b = rng.uniform(-bound, bound);
  }
  return p;
}

int param_count(const Mlp& p) {
  int n = 0;
  for (const Layer& l : p.layers) n += l.w.rows * l.w.cols + static_cast<int>(l.b.size());
  return n;
}

Mat forward_batch(const Mlp& p, const Mat& inputs, ForwardCache* cache) {
  if (inputs.cols != p.dims.front())
    throw ShapeError("input width " + std::to_string(inputs.cols) + " != network input " +
                     std::to_string(p.dims.front()));
  if (cache) {
    cache->input = inputs;
    cache->post.clear();
    cache->post.reserve(p.layers.size());
  }

  Mat cur = inputs;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const Layer& layer = p.layers[l];
    const bool is_last = (l + 1 == p.layers.size());
    const int out_dim = layer.w.rows;
    const int in_dim = layer.w.cols;
    Mat next(cur.rows, out_dim);
    for (int b = 0; b < cur.rows; ++b) {
      const double* x = cur.row(b);
      double* y = next.row(b);
      for (int o = 0; o < out_dim; ++o) {
        const double* w = layer.w.row(o);
        double s = layer.b[o];
        for (int i = 0; i < in_dim; ++i) s += w[i] * x[i];
        y[o] = (is_last || s > 0.0) ? s : 0.0;
      }
    }
    if (cache) cache->post.push_back(next);
    cur = std::move(next);
  }
  return cur;
}

Grads zero_grads(const Mlp& p) {
  Grads g;
  g.layers.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    g.layers[l].w = Mat(p.layers[l].w.rows, p.layers[l].w.cols);
    g.layers[l].b.assign(p.layers[l].b.size(), 0.0);
  }
  return g;
}

void backward_batch(const Mlp& p, const ForwardCache& cache, const Mat& d_output, Grads* out) {
  if (cache.post.size() != p.layers.size() || cache.input.cols != p.dims.front())
    throw StateError("forward cache does not match this network");
  if (d_output.rows != cache.input.rows || d_output.cols != p.dims.back())
    throw ShapeError("output gradient shape mismatch");
  if (out->layers.size() != p.layers.size()) throw ShapeError("gradient accumulator shape mismatch");

  const int batch = d_output.rows;
  Mat delta = d_output;
  for (int l = static_cast<int>(p.layers.size()) - 1; l >= 0; --l) {
    const Layer& layer = p.layers[l];
    const Mat& acts_in = (l == 0) ? cache.input : cache.post[l - 1];
    Layer& grad = out->layers[l];

    for (int b = 0; b < batch; ++b) {
      const double* d = delta.row(b);
      const double* x = acts_in.row(b);
      for (int o = 0; o < layer.w.rows; ++o) {
        const double dob = d[o];
        if (dob == 0.0) continue;
        double* gw = grad.w.row(o);
        for (int i = 0; i < layer.w.cols; ++i) gw[i] += dob * x[i];
        grad.b[o] += dob;
      }
    }

    if (l == 0) break;
    Mat d_in(batch, layer.w.cols);
    for (int b = 0; b < batch; ++b) {
      const double* d = delta.row(b);
      double* di = d_in.row(b);
      for (int o = 0; o < layer.w.rows; ++o) {
        const double dob = d[o];
        if (dob == 0.0) continue;
        const double* w = layer.w.row(o);
        for (int i = 0; i < layer.w.cols; ++i) di[i] += dob * w[i];
      }
      // ReLU mask from the cached post-activation of the previous layer.
      const double* h = cache.post[l - 1].row(b);
      for (int i = 0; i < layer.w.cols; ++i)
        if (h[i] <= 0.0) di[i] = 0.0;
    }
    delta = std::move(d_in);
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double x : logits) sum += std::exp(x - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

PolicyDistribution forward_actor(const Mlp& p, std::span<const double> obs) {
  Mat in(1, static_cast<int>(obs.size()));
  std::copy(obs.begin(), obs.end(), in.v.begin());
  const Mat logits = forward_batch(p, in);
  return softmax(std::span<const double>(logits.v));
}

std::vector<double> forward_critic(const Mlp& p, std::span<const double> obs) {
  Mat in(1, static_cast<int>(obs.size()));
  std::copy(obs.begin(), obs.end(), in.v.begin());
  return forward_batch(p, in).v;
}

AdamState make_adam(const Mlp& p, const AdamConfig& cfg) {
  AdamState st;
  st.cfg = cfg;
  const Grads z = zero_grads(p);
  st.m = z.layers;
  st.v = z.layers;
  return st;
}

void adam_step(Mlp& p, const Grads& g, AdamState& st) {
  if (g.layers.size() != p.layers.size() || st.m.size() != p.layers.size())
    throw ShapeError("adam state/gradient shape mismatch");
  st.step += 1;
  const double b1 = st.cfg.beta1;
  const double b2 = st.cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  const double lr = st.cfg.learning_rate;

  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto update = [&](double& param, double& m, double& v, double grad) {
      m = b1 * m + (1.0 - b1) * grad;
      v = b2 * v + (1.0 - b2) * grad * grad;
      param -= lr * (m / bc1) / (std::sqrt(v / bc2) + st.cfg.eps);
    };
    Layer& layer = p.layers[l];
    const Layer& grad = g.layers[l];
    if (grad.w.rows != layer.w.rows || grad.w.cols != layer.w.cols)
      throw ShapeError("gradient matrix shape mismatch at layer " + std::to_string(l));
    for (std::size_t i = 0; i < layer.w.v.size(); ++i)
      update(layer.w.v[i], st.m[l].w.v[i], st.v[l].w.v[i], grad.w.v[i]);
    for (std::size_t i = 0; i < layer.b.size(); ++i)
      update(layer.b[i], st.m[l].b[i], st.v[l].b[i], grad.b[i]);
  }
}

namespace {

// Flat coordinate view over all parameters, for finite differences.
double* coord_ptr(Mlp& p, int idx) {
  for (Layer& l : p.layers) {
    const int wn = l.w.rows * l.w.cols;
    if (idx < wn) return &l.w.v[idx];
    idx -= wn;
    if (idx < static_cast<int>(l.b.size())) return &l.b[idx];
    idx -= static_cast<int>(l.b.size());
  }
  return nullptr;
}

double coord_grad(const Grads& g, int idx) {
  for (const Layer& l : g.layers) {
    const int wn = l.w.rows * l.w.cols;
    if (idx < wn) return l.w.v[idx];
    idx -= wn;
    if (idx < static_cast<int>(l.b.size())) return l.b[idx];
    idx -= static_cast<int>(l.b.size());
  }
  return 0.0;
}

}  // namespace

double finite_diff_check(const std::function<double(const Mlp&)>& loss_fn, const Mlp& p,
                         const Grads& analytic, double h, int min_coords, Rng& rng) {
  const int total = param_count(p);
  std::vector<int> coords;
  if (total <= min_coords) {
    coords.resize(total);
    for (int i = 0; i < total; ++i) coords[i] = i;
  } else {
    coords.reserve(min_coords);
    for (int i = 0; i < min_coords; ++i) coords.push_back(rng.uniform_int(0, total - 1));
  }

  Mlp work = p;
  double max_rel = 0.0;
  for (int idx : coords) {
    double* c = coord_ptr(work, idx);
    const double saved = *c;
    *c = saved + h;
    const double up = loss_fn(work);
    *c = saved - h;
    const double down = loss_fn(work);
    *c = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double exact = coord_grad(analytic, idx);
    const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::abs(exact - numeric) / denom);
  }
  return max_rel;
}

void save_params(const Mlp& p, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for write: " + path);
  f.write(kMagic, sizeof(kMagic));
  const auto put_u32 = [&](std::uint32_t x) { f.write(reinterpret_cast<const char*>(&x), 4); };
  put_u32(static_cast<std::uint32_t>(p.dims.size()));
  for (int d : p.dims) put_u32(static_cast<std::uint32_t>(d));
  for (const Layer& l : p.layers) {
    f.write(reinterpret_cast<const char*>(l.w.v.data()),
            static_cast<std::streamsize>(l.w.v.size() * sizeof(double)));
    f.write(reinterpret_cast<const char*>(l.b.data()),
            static_cast<std::streamsize>(l.b.size() * sizeof(double)));
  }
  if (!f) throw IoError("write failed: " + path);
}

Mlp load_params(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for read: " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw FormatError("bad magic/version in " + path);
  const auto get_u32 = [&]() {
    std::uint32_t x = 0;
    f.read(reinterpret_cast<char*>(&x), 4);
    if (!f) throw FormatError("truncated header in " + path);
    return x;
  };
  const std::uint32_t ndims = get_u32();
  if (ndims < 2 || ndims > 64) throw FormatError("implausible dim count in " + path);
  std::vector<int> dims(ndims);
  for (auto& d : dims) d = static_cast<int>(get_u32());

  Mlp p;
  p.dims = dims;
  p.layers.resize(dims.size() - 1);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    Layer& layer = p.layers[l];
    layer.w = Mat(dims[l + 1], dims[l]);
    layer.b.assign(dims[l + 1], 0.0);
    f.read(reinterpret_cast<char*>(layer.w.v.data()),
           static_cast<std::streamsize>(layer.w.v.size() * sizeof(double)));
    f.read(reinterpret_cast<char*>(layer.b.data()),
           static_cast<std::streamsize>(layer.b.size() * sizeof(double)));
    if (!f) throw FormatError("truncated parameter data in " + path);
  }
  f.peek();
  if (!f.eof()) throw FormatError("trailing bytes in " + path);
  return p;
}

}  // namespace lanerl::net
