#include "smsat/nn/module.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace smsat::nn {

Index Module::parameter_count() const {
  Index n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

void Module::zero_grad() const {
  for (auto p : parameters()) p.tensor.zero_grad();
}

Tensor kaiming_uniform(Shape shape, Index fan_in, CounterRng& rng) {
  if (fan_in < 1) throw Error("kaiming_uniform: fan_in must be positive");
  return uniform_init(std::move(shape), std::sqrt(6.0 / static_cast<double>(fan_in)), rng);
}

Tensor uniform_init(Shape shape, double bound, CounterRng& rng) {
  const Index n = shape_numel(shape);
  Array v(n);
  for (Index i = 0; i < n; ++i) v(i) = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Adam::Adam(std::vector<ParamRef> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr >= 0.0)) throw Error("adam: learning rate must be >= 0");
  for (const auto& p : params_) {
    m_.push_back(Array::Zero(p.tensor.numel()));
    v_.push_back(Array::Zero(p.tensor.numel()));
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].tensor;
    if (!p.has_grad()) continue;
    const Array& g = p.grad();
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.square();
    p.value() -= cfg_.lr * (m_[i] / c1) / ((v_[i] / c2).sqrt() + cfg_.eps);
    p.zero_grad();
  }
}

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'S', 'M', 'S', 'A', 'T', 'C', 'K', '1'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::filesystem::path& file) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error(file.string() + ": truncated checkpoint");
  return v;
}

std::string get_bytes(std::istream& is, std::uint64_t n, const std::filesystem::path& file) {
  if (n > (1ULL << 32)) throw Error(file.string() + ": corrupt checkpoint (length " + std::to_string(n) + ")");
  std::string s(n, '\0');
  if (n && !is.read(s.data(), static_cast<std::streamsize>(n))) throw Error(file.string() + ": truncated checkpoint");
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ck) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + file.string());
  os.write(kMagic, 8);
  const std::string header = ck.header.dump();
  put<std::uint64_t>(os, header.size());
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  put<std::uint64_t>(os, ck.tensors.size());
  for (const auto& t : ck.tensors) {
    if (shape_numel(t.shape) != t.data.size()) throw ShapeError("checkpoint: tensor " + t.name + " shape/data mismatch");
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint8_t>(os, 1);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(os, static_cast<std::uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!os) throw Error("write failed for " + file.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint " + file.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw Error(file.string() + ": not a checkpoint file");
  Checkpoint ck;
  const std::string header = get_bytes(is, get<std::uint64_t>(is, file), file);
  try {
    ck.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw Error(file.string() + ": bad checkpoint header: " + e.what());
  }
  const auto count = get<std::uint64_t>(is, file);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray t;
    t.name = get_bytes(is, get<std::uint32_t>(is, file), file);
    if (get<std::uint8_t>(is, file) != 1) throw Error(file.string() + ": unsupported dtype for " + t.name);
    const auto nd = get<std::uint32_t>(is, file);
    for (std::uint32_t d = 0; d < nd; ++d) t.shape.push_back(static_cast<Index>(get<std::uint64_t>(is, file)));
    t.data.resize(shape_numel(t.shape));
    if (t.data.size() &&
        !is.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double))))
      throw Error(file.string() + ": truncated checkpoint");
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

Checkpoint snapshot(Module& m, nlohmann::json header) {
  Checkpoint ck;
  ck.header = std::move(header);
  for (const auto& p : m.parameters()) ck.tensors.push_back({p.name, p.tensor.shape(), p.tensor.value()});
  for (const auto& b : m.buffers()) ck.tensors.push_back({b.name, {b.data->size()}, *b.data});
  return ck;
}

void restore(Module& m, const Checkpoint& ck) {
  for (auto p : m.parameters()) {
    const NamedArray* t = ck.find(p.name);
    if (!t) throw Error("checkpoint: missing tensor " + p.name);
    if (t->shape != p.tensor.shape())
      throw ShapeError("checkpoint: tensor " + p.name + " has shape " + shape_str(t->shape) + ", model expects " +
                       shape_str(p.tensor.shape()));
    p.tensor.value() = t->data;
  }
  for (const auto& b : m.buffers()) {
    const NamedArray* t = ck.find(b.name);
    if (!t) throw Error("checkpoint: missing buffer " + b.name);
    *b.data = t->data;
  }
}

GradCheckResult grad_check(const std::function<Tensor()>& f, const std::vector<ParamRef>& inputs, double h,
                           Index max_coords, std::uint64_t seed) {
  CounterRng rng(seed);
  Tensor probe = f();
  const Array weights = [&] {
    Array w(probe.numel());
    if (probe.numel() == 1) return Array::Ones(1).eval();
    for (Index i = 0; i < w.size(); ++i) w(i) = rng.uniform(-1.0, 1.0);
    return w;
  }();
  const Shape out_shape = probe.shape();
  auto objective = [&](Tensor y) {
    if (y.shape() != out_shape) throw ShapeError("grad_check: output shape changed between calls");
    return sum(mul(y, Tensor::from(out_shape, weights)));
  };

  for (auto in : inputs) in.tensor.zero_grad();
  objective(probe).backward();
  std::vector<Array> analytic;
  for (auto in : inputs) analytic.push_back(in.tensor.has_grad() ? in.tensor.grad() : Array::Zero(in.tensor.numel()));

  GradCheckResult res;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor t = inputs[k].tensor;
    std::vector<Index> coords(static_cast<std::size_t>(t.numel()));
    std::iota(coords.begin(), coords.end(), Index{0});
    if (max_coords > 0 && t.numel() > max_coords) {
      for (Index i = 0; i < max_coords; ++i) {
        const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(t.numel() - i)));
        std::swap(coords[static_cast<std::size_t>(i)], coords[static_cast<std::size_t>(j)]);
      }
      coords.resize(static_cast<std::size_t>(max_coords));
    }
    for (Index c : coords) {
      const double orig = t.value()(c);
      t.value()(c) = orig + h;
      const double up = objective(f()).item();
      t.value()(c) = orig - h;
      const double down = objective(f()).item();
      t.value()(c) = orig;
      const double num = (up - down) / (2.0 * h);
      const double a = analytic[k](c);
      const double err = std::abs(a - num) / std::max({1.0, std::abs(a), std::abs(num)});
      ++res.checked;
      if (err > res.max_rel_error || res.worst.empty()) {
        if (err >= res.max_rel_error) {
          res.max_rel_error = err;
          res.worst = inputs[k].name + "[" + std::to_string(c) + "]";
        }
      }
    }
  }
  for (auto in : inputs) in.tensor.zero_grad();
  return res;
}

}  // namespace smsat::nn
