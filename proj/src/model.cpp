#include "sharekd/model.hpp"

#include <stdexcept>

#include "sharekd/rng.hpp"

namespace sharekd {

using nk::Tensor;

void EncoderConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw std::invalid_argument(std::string("encoder config: ") + name + " must be positive");
  };
  positive(vocab_size, "vocab_size");
  positive(max_seq_len, "max_seq_len");
  positive(hidden_dim, "hidden_dim");
  positive(num_heads, "num_heads");
  positive(ff_dim, "ff_dim");
  positive(num_physical_layers, "num_physical_layers");
  positive(num_classes, "num_classes");
  if (hidden_dim % num_heads != 0) {
    throw std::invalid_argument("encoder config: hidden_dim " + std::to_string(hidden_dim) +
                                " is not divisible by num_heads " + std::to_string(num_heads));
  }
}

namespace {

template <typename Layer, typename Fn>
void visit_layer(Layer& p, Fn&& fn) {
  fn("wq", p.wq);
  fn("bq", p.bq);
  fn("wk", p.wk);
  fn("bk", p.bk);
  fn("wv", p.wv);
  fn("bv", p.bv);
  fn("wo", p.wo);
  fn("bo", p.bo);
  fn("w_ff1", p.w_ff1);
  fn("b_ff1", p.b_ff1);
  fn("w_ff2", p.w_ff2);
  fn("b_ff2", p.b_ff2);
  fn("ln1_gamma", p.ln1_gamma);
  fn("ln1_beta", p.ln1_beta);
  fn("ln2_gamma", p.ln2_gamma);
  fn("ln2_beta", p.ln2_beta);
}

Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double stddev) {
  std::vector<double> values(rows * cols);
  for (double& v : values) v = rng.normal(0.0, stddev);
  return Tensor::matrix(rows, cols, std::move(values));
}

}  // namespace

void LayerParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_layer(*this, [&](const char* name, Tensor& t) { fn(name, t); });
}

void LayerParams::visit(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  visit_layer(*this, [&](const char* name, const Tensor& t) { fn(name, t); });
}

std::vector<NamedTensor> ParamStore::named_tensors() const {
  std::vector<NamedTensor> out;
  out.push_back({"token_embedding", token_embedding});
  out.push_back({"position_embedding", position_embedding});
  for (std::size_t i = 0; i < layer_sets.size(); ++i) {
    layer_sets[i].visit([&](const std::string& name, const Tensor& t) {
      out.push_back({"set" + std::to_string(i) + "." + name, t});
    });
  }
  out.push_back({"head_w", head_w});
  out.push_back({"head_b", head_b});
  return out;
}

std::vector<Tensor> ParamStore::parameters() const {
  std::vector<Tensor> out;
  for (auto& nt : named_tensors()) out.push_back(nt.tensor);
  return out;
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  out.token_embedding = token_embedding.clone();
  out.position_embedding = position_embedding.clone();
  for (const auto& layer : layer_sets) {
    LayerParams copy = layer;
    copy.for_each([](const std::string&, Tensor& t) { t = t.clone(); });
    out.layer_sets.push_back(std::move(copy));
  }
  out.head_w = head_w.clone();
  out.head_b = head_b.clone();
  return out;
}

void ParamStore::zero_grad() {
  for (Tensor& t : parameters()) t.clear_grad();
}

LayerParams init_layer(const EncoderConfig& config, Rng& rng, double init_std) {
  const std::size_t d = config.hidden_dim, ff = config.ff_dim;
  LayerParams p;
  p.wq = random_matrix(d, d, rng, init_std);
  p.bq = Tensor::zeros({d});
  p.wk = random_matrix(d, d, rng, init_std);
  p.bk = Tensor::zeros({d});
  p.wv = random_matrix(d, d, rng, init_std);
  p.bv = Tensor::zeros({d});
  p.wo = random_matrix(d, d, rng, init_std);
  p.bo = Tensor::zeros({d});
  p.w_ff1 = random_matrix(d, ff, rng, init_std);
  p.b_ff1 = Tensor::zeros({ff});
  p.w_ff2 = random_matrix(ff, d, rng, init_std);
  p.b_ff2 = Tensor::zeros({d});
  p.ln1_gamma = Tensor::filled({d}, 1.0);
  p.ln1_beta = Tensor::zeros({d});
  p.ln2_gamma = Tensor::filled({d}, 1.0);
  p.ln2_beta = Tensor::zeros({d});
  return p;
}

void init_head(ParamStore& store, std::size_t hidden_dim, std::size_t num_classes, Rng& rng,
               double init_std) {
  store.head_w = random_matrix(hidden_dim, num_classes, rng, init_std);
  store.head_b = Tensor::zeros({num_classes});
}

ParamStore init_params(const EncoderConfig& config, std::size_t num_param_sets, Rng& rng,
                       double init_std) {
  config.validate();
  ParamStore store;
  store.token_embedding = random_matrix(config.vocab_size, config.hidden_dim, rng, init_std);
  store.position_embedding = random_matrix(config.max_seq_len, config.hidden_dim, rng, init_std);
  for (std::size_t i = 0; i < num_param_sets; ++i)
    store.layer_sets.push_back(init_layer(config, rng, init_std));
  init_head(store, config.hidden_dim, config.num_classes, rng, init_std);
  return store;
}

void Model::validate() const {
  config.validate();
  if (plan.size() != config.num_physical_layers) {
    throw std::invalid_argument("model: plan has " + std::to_string(plan.size()) +
                                " layers but config declares " +
                                std::to_string(config.num_physical_layers));
  }
  if (plan.num_param_sets() != store.layer_sets.size()) {
    throw std::invalid_argument("model: plan references " + std::to_string(plan.num_param_sets()) +
                                " parameter sets but store holds " +
                                std::to_string(store.layer_sets.size()));
  }
  const std::size_t d = config.hidden_dim;
  auto expect = [](const Tensor& t, nk::Shape shape, const std::string& name) {
    if (!t.defined() || t.shape() != shape) {
      throw std::invalid_argument("model: tensor " + name + " should have shape " +
                                  nk::shape_str(shape));
    }
  };
  expect(store.token_embedding, {config.vocab_size, d}, "token_embedding");
  expect(store.position_embedding, {config.max_seq_len, d}, "position_embedding");
  expect(store.head_w, {d, config.num_classes}, "head_w");
  expect(store.head_b, {config.num_classes}, "head_b");
  const std::size_t ff = config.ff_dim;
  for (std::size_t i = 0; i < store.layer_sets.size(); ++i) {
    const auto& p = store.layer_sets[i];
    const std::string prefix = "set" + std::to_string(i) + ".";
    for (auto [t, name] : {std::pair{&p.wq, "wq"}, {&p.wk, "wk"}, {&p.wv, "wv"}, {&p.wo, "wo"}})
      expect(*t, {d, d}, prefix + name);
    for (auto [t, name] : {std::pair{&p.bq, "bq"}, {&p.bk, "bk"}, {&p.bv, "bv"}, {&p.bo, "bo"},
                           {&p.b_ff2, "b_ff2"}, {&p.ln1_gamma, "ln1_gamma"},
                           {&p.ln1_beta, "ln1_beta"}, {&p.ln2_gamma, "ln2_gamma"},
                           {&p.ln2_beta, "ln2_beta"}})
      expect(*t, {d}, prefix + name);
    expect(p.w_ff1, {d, ff}, prefix + "w_ff1");
    expect(p.b_ff1, {ff}, prefix + "b_ff1");
    expect(p.w_ff2, {ff, d}, prefix + "w_ff2");
  }
}

Model Model::clone() const { return Model{config, store.clone(), plan}; }

}  // namespace sharekd
