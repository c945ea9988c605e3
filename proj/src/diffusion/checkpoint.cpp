#include "dpcc/diffusion/checkpoint.hpp"

#include <cmath>

#include "dpcc/core/errors.hpp"

namespace dpcc {

Json train_config_to_json(const TrainConfig& c) {
  return Json{{"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"steps", c.steps},
              {"epochs", c.epochs},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},
              {"validation_fraction", c.validation_fraction},
              {"warmup_steps", c.warmup_steps},
              {"lr_schedule", c.lr_schedule},
              {"validation_samples", c.validation_samples},
              {"seed", c.seed},
              {"embed_dim", c.embed_dim},
              {"hidden", c.hidden}};
}

TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps = j.value("steps", c.steps);
  c.epochs = j.value("epochs", c.epochs);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.lr_schedule = j.value("lr_schedule", c.lr_schedule);
  c.validation_samples = j.value("validation_samples", c.validation_samples);
  c.seed = j.value("seed", c.seed);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.hidden = j.value("hidden", c.hidden);
  return c;
}

Json checkpoint_to_json(const Checkpoint& ckpt) {
  const auto& arch = ckpt.net.arch();
  Json history = Json::array();
  for (const auto& r : ckpt.history) {
    history.push_back({{"step", r.step},
                       {"epoch", r.epoch},
                       {"train_loss", std::isfinite(r.train_loss) ? Json(r.train_loss) : Json(nullptr)},
                       {"validation_loss", r.validation_loss}});
  }
  return Json{
      {"schema_version", kCheckpointSchemaVersion},
      {"kind", "dpcc-checkpoint"},
      {"shape",
       {{"length", ckpt.shape.length}, {"state_dim", ckpt.shape.state_dim}, {"action_dim", ckpt.shape.action_dim}}},
      {"net",
       {{"traj_dim", arch.traj_dim},
        {"embed_dim", arch.embed_dim},
        {"hidden", arch.hidden},
        {"activation", "silu"},
        {"params", vector_to_json(ckpt.net.params())}}},
      {"schedule",
       {{"steps", ckpt.schedule.steps()},
        {"cosine_offset", ckpt.schedule.offset()},
        {"max_beta", ckpt.schedule.max_beta()},
        {"betas", ckpt.schedule.betas()}}},
      {"normalizer", normalizer_to_json(ckpt.normalizer)},
      {"train_config", train_config_to_json(ckpt.config)},
      {"validation",
       {{"initial_loss", ckpt.initial_validation_loss},
        {"best_loss", ckpt.best_validation_loss},
        {"best_step", ckpt.best_step},
        {"history", history}}}};
}

Checkpoint checkpoint_from_json(const Json& j) {
  const int version = require(j, "schema_version", "checkpoint").get<int>();
  if (version != kCheckpointSchemaVersion) {
    throw ConfigError("checkpoint: unsupported schema_version " + std::to_string(version));
  }
  try {
    Checkpoint c;
    const Json& shape = require(j, "shape", "checkpoint");
    c.shape = {shape.at("length").get<int>(), shape.at("state_dim").get<int>(), shape.at("action_dim").get<int>()};
    const Json& net = require(j, "net", "checkpoint");
    DenoiserArch arch{net.at("traj_dim").get<int>(), net.at("embed_dim").get<int>(),
                      net.at("hidden").get<std::vector<int>>()};
    if (arch.traj_dim != c.shape.flat_size()) throw ConfigError("checkpoint: net size does not match shape");
    c.net = DenoiserNet(arch, vector_from_json(net.at("params")));
    const Json& sched = require(j, "schedule", "checkpoint");
    c.schedule = NoiseSchedule::from_betas(sched.at("betas").get<std::vector<double>>());
    const double offset = sched.value("cosine_offset", -1.0);
    if (offset >= 0.0) c.schedule = NoiseSchedule::cosine(c.schedule.steps(), offset, sched.at("max_beta").get<double>());
    c.normalizer = normalizer_from_json(require(j, "normalizer", "checkpoint"));
    c.config = train_config_from_json(require(j, "train_config", "checkpoint"));
    const Json& val = require(j, "validation", "checkpoint");
    c.initial_validation_loss = val.at("initial_loss").get<double>();
    c.best_validation_loss = val.at("best_loss").get<double>();
    c.best_step = val.at("best_step").get<int>();
    for (const auto& r : val.value("history", Json::array())) {
      c.history.push_back({r.at("step").get<int>(), r.at("epoch").get<int>(),
                           r.at("train_loss").is_null() ? std::nan("") : r.at("train_loss").get<double>(),
                           r.at("validation_loss").get<double>()});
    }
    return c;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("checkpoint: malformed field: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_json_file(path, checkpoint_to_json(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("missing checkpoint '" + path.string() + "'");
  return checkpoint_from_json(read_json_file(path));
}

}  // namespace dpcc
