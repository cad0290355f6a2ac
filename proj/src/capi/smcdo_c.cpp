#include "smcdo/smcdo.h"

#include <iostream>
#include <optional>
#include <sstream>
#include <span>
#include <string>

#include "bench/cifar.hpp"
#include "bench/commands.hpp"
#include "eval/metrics.hpp"
#include "graph/executor.hpp"
#include "graph/weights_io.hpp"
#include "tensor/error.hpp"

struct smcdo_model {
  smcdo::ModelGraph graph;
};

struct smcdo_output {
  smcdo::EnsembleOutput out;
};

namespace {

thread_local std::string last_error;

int fail(int code, const std::string& what) {
  last_error = what;
  return code;
}

template <class F>
int guarded(F&& f) {
  try {
    last_error.clear();
    f();
    return SMCDO_OK;
  } catch (const smcdo::Error& e) {
    return fail(static_cast<int>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(SMCDO_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SMCDO_ERR_INTERNAL, e.what());
  }
}

void require(const void* p, const char* name) {
  if (!p) throw smcdo::ArgumentError(std::string(name) + " is NULL");
}

smcdo::Shape to_shape(const size_t s[4]) { return smcdo::Shape{s[0], s[1], s[2], s[3]}; }

smcdo::Tensor copy_in(const double* data, const size_t shape[4]) {
  require(data, "input");
  require(shape, "shape");
  const smcdo::Shape s = to_shape(shape);
  return smcdo::Tensor(s, std::vector<double>(data, data + s.numel()));
}

std::span<const int> labels_for(const int* labels, const size_t shape[4]) {
  require(labels, "labels");
  return {labels, shape[0] * shape[2] * shape[3]};
}

}  // namespace

extern "C" {

const char* smcdo_version(void) { return "0.1.0"; }

const char* smcdo_last_error(void) { return last_error.c_str(); }

int smcdo_model_create(const char* arch_json, double rate_train, double rate_inf, smcdo_model** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    smcdo::ArchConfig arch;
    smcdo::DropoutMode mode = smcdo::DropoutMode::spatial;
    if (arch_json && *arch_json) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(arch_json);
      } catch (const nlohmann::json::exception& e) {
        throw smcdo::ConfigError(std::string("arch json: ") + e.what());
      }
      const auto cfg = smcdo::parse_experiment_config(nlohmann::json{{"arch", j}});
      arch = cfg.arch;
      mode = cfg.dropout_mode;
    }
    auto m = std::make_unique<smcdo_model>();
    m->graph = smcdo::build_model(arch, smcdo::DropoutSpec{mode, rate_train, rate_inf});
    *out = m.release();
  });
}

int smcdo_model_load(const char* checkpoint_path, smcdo_model** out) {
  return guarded([&] {
    require(out, "out");
    require(checkpoint_path, "checkpoint_path");
    *out = nullptr;
    auto m = std::make_unique<smcdo_model>();
    m->graph = smcdo::load_checkpoint(checkpoint_path).graph;
    *out = m.release();
  });
}

int smcdo_model_save(const smcdo_model* model, const char* weights_path) {
  return guarded([&] {
    require(model, "model");
    require(weights_path, "weights_path");
    smcdo::save_weights(model->graph, weights_path);
  });
}

void smcdo_model_free(smcdo_model* model) { delete model; }

int smcdo_model_set_inference_rate(smcdo_model* model, double rate) {
  return guarded([&] {
    require(model, "model");
    model->graph.set_inference_rate(rate);
  });
}

int smcdo_model_dropout_sites(const smcdo_model* model, size_t* out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = model->graph.dropout_site_count();
  });
}

int smcdo_model_parameter_count(const smcdo_model* model, size_t* out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = model->graph.weights().parameter_count();
  });
}

int smcdo_model_output_shape(const smcdo_model* model, const size_t input_shape[4], size_t out_shape[4]) {
  return guarded([&] {
    require(model, "model");
    require(input_shape, "input_shape");
    require(out_shape, "out_shape");
    const smcdo::Shape s = model->graph.output_shape(to_shape(input_shape));
    out_shape[0] = s.n;
    out_shape[1] = s.c;
    out_shape[2] = s.h;
    out_shape[3] = s.w;
  });
}

int smcdo_run_vanilla(const smcdo_model* model, const double* input, const size_t shape[4], smcdo_output** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = nullptr;
    auto o = std::make_unique<smcdo_output>();
    o->out = smcdo::aggregate({smcdo::run_vanilla(model->graph, copy_in(input, shape))});
    *out = o.release();
  });
}

int smcdo_run_mcdo(const smcdo_model* model, const double* input, const size_t shape[4], size_t num_samples,
                   uint64_t seed, smcdo_output** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = nullptr;
    auto o = std::make_unique<smcdo_output>();
    o->out = smcdo::run_mcdo(model->graph, copy_in(input, shape), num_samples, seed);
    *out = o.release();
  });
}

int smcdo_run_branched(const smcdo_model* model, const double* input, const size_t shape[4], size_t num_samples,
                       uint64_t seed, int fused, smcdo_output** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = nullptr;
    auto o = std::make_unique<smcdo_output>();
    const smcdo::BranchedModel b = smcdo::split_at(model->graph, num_samples);
    smcdo::ExecOptions opt;
    opt.fused = fused != 0;
    o->out = smcdo::run_branched(b, copy_in(input, shape), seed, opt);
    *out = o.release();
  });
}

int smcdo_output_shape(const smcdo_output* out, size_t shape[4]) {
  return guarded([&] {
    require(out, "out");
    require(shape, "shape");
    const smcdo::Shape s = out->out.mean_probs.shape();
    shape[0] = s.n;
    shape[1] = s.c;
    shape[2] = s.h;
    shape[3] = s.w;
  });
}

size_t smcdo_output_num_samples(const smcdo_output* out) { return out ? out->out.per_sample_probs.size() : 0; }

const double* smcdo_output_mean_probs(const smcdo_output* out) {
  return out ? out->out.mean_probs.data().data() : nullptr;
}

const double* smcdo_output_entropy(const smcdo_output* out) {
  return out ? out->out.predictive_entropy.data().data() : nullptr;
}

const double* smcdo_output_variance(const smcdo_output* out) {
  return out ? out->out.per_class_variance.data().data() : nullptr;
}

void smcdo_output_free(smcdo_output* out) { delete out; }

int smcdo_metric_accuracy(const double* probs, const size_t shape[4], const int* labels, double* out) {
  return guarded([&] {
    require(out, "out");
    *out = smcdo::accuracy(copy_in(probs, shape), labels_for(labels, shape));
  });
}

int smcdo_metric_ece(const double* probs, const size_t shape[4], const int* labels, size_t bins, double* out) {
  return guarded([&] {
    require(out, "out");
    *out = smcdo::ece(copy_in(probs, shape), labels_for(labels, shape), bins);
  });
}

int smcdo_metric_nll(const double* probs, const size_t shape[4], const int* labels, double* out) {
  return guarded([&] {
    require(out, "out");
    *out = smcdo::nll(copy_in(probs, shape), labels_for(labels, shape));
  });
}

int smcdo_metric_dice(const int* predicted, const int* truth, size_t count, double* out) {
  return guarded([&] {
    require(predicted, "predicted");
    require(truth, "truth");
    require(out, "out");
    *out = smcdo::dice(std::span<const int>(predicted, count), std::span<const int>(truth, count));
  });
}

int smcdo_write_synthetic_cifar(const char* path, size_t count, uint64_t seed) {
  return guarded([&] {
    require(path, "path");
    if (count == 0) throw smcdo::ArgumentError("count must be positive");
    smcdo::write_cifar10(path, smcdo::synthetic_cifar(count, seed));
  });
}

int smcdo_command_run(const char* command, const smcdo_command_options* options) {
  if (!command || !options || !options->config_path) {
    last_error = "command, options and config_path are required";
    std::cerr << "error: " << last_error << std::endl;
    return SMCDO_ERR_CONFIG;
  }
  smcdo::CommandOptions o;
  o.config_path = options->config_path;
  for (size_t i = 0; i < options->num_checkpoints; ++i)
    if (options->checkpoints && options->checkpoints[i]) o.checkpoints.emplace_back(options->checkpoints[i]);
  if (options->out_dir) o.out_dir = options->out_dir;
  if (options->has_seed) o.seed = options->seed;
  o.threads = options->threads == 0 ? 1 : options->threads;
  if (options->verbose) o.log = &std::cerr;
  std::ostringstream err;
  const int code = smcdo::run_command(command, o, err);
  last_error = err.str();
  while (!last_error.empty() && last_error.back() == '\n') last_error.pop_back();
  std::cerr << err.str();
  return code;
}

}  // extern "C"
