// vlora: FLOPs analysis, self-verification, toy training and evaluation.
//
// Exit codes: 0 success, 1 verification or run failure, 2 usage/config error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vlora/config.hpp"
#include "vlora/cost_model.hpp"
#include "vlora/train.hpp"
#include "vlora/verify.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("VLORA_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("VLORA_SEED is not an unsigned integer: '") + env + "'");
  }
  return 0;
}

vlora::RunConfig config_or_default(const std::string& path) {
  if (path.empty()) return vlora::parse_run_config("{}");
  return vlora::load_run_config(path);
}

// ---- flops -----------------------------------------------------------------

struct FlopsArgs {
  std::string config;
  std::vector<std::uint64_t> L;
  std::string out;
  bool table1 = false;
};

int run_flops(const FlopsArgs& args) {
  const auto cfg = config_or_default(args.config);
  if (args.table1) {
    std::printf("%-14s %8s %14s %12s %10s\n", "model", "vis.tok", "computed GF", "printed GF", "rel.err");
    for (const auto& row : vlora::reference_table())
      std::printf("%-14s %8llu %14.1f %12.0f %+9.3f%%\n", row.model.c_str(),
                  static_cast<unsigned long long>(row.visual_tokens), row.computed_gflops, row.printed_gflops,
                  100.0 * row.relative_error());
    if (args.L.empty()) return kExitOk;
  }
  if (args.L.empty()) throw UsageError("flops: --L needs at least one visual token count");
  const auto rows = vlora::sweep(cfg.cost, args.L);
  const auto csv = vlora::sweep_csv(rows);
  if (args.out.empty() || args.out == "-") {
    std::cout << csv;
    return kExitOk;
  }
  std::ofstream out(args.out);
  if (!out) throw UsageError("flops: cannot write '" + args.out + "'");
  out << csv;
  out.flush();
  if (!out) throw UsageError("flops: write to '" + args.out + "' failed");
  std::printf("wrote %zu rows to %s\n", rows.size(), args.out.c_str());
  return kExitOk;
}

// ---- verify ----------------------------------------------------------------

struct VerifyArgs {
  std::optional<std::uint64_t> seed;
  bool fp64 = false;
  bool inject_fault = false;
  std::size_t pairs = 16;
};

int run_verify(const VerifyArgs& args) {
  vlora::VerifyOptions opt;
  opt.seed = resolve_seed(args.seed);
  opt.fp64 = args.fp64;
  opt.inject_fault = args.inject_fault;
  opt.pairs = args.pairs;
  const auto report = vlora::run_verify(opt);
  for (const auto& c : report.checks)
    std::printf("[%s] %-20s %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
  return report.all_passed() ? kExitOk : kExitFailure;
}

// ---- train / eval ----------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string stage;
  std::string ablate_kinds;
  std::optional<std::size_t> rank;
  std::optional<std::size_t> pwg_blocks;
  std::optional<std::size_t> steps;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> data_seed;
  std::string out;
  std::string init_from;
  std::string corpus = "captions";
  bool image_blind = false;
  bool fp64 = false;
};

template <typename T>
int train_with(vlora::RunConfig cfg, const TrainArgs& args, std::uint64_t seed, std::uint64_t data_seed) {
  auto model = args.init_from.empty() ? vlora::init_model<T>(cfg.model, seed) : vlora::load_model<T>(args.init_from);
  const fs::path out(args.out);
  vlora::save_model(model, out / "init");

  const auto split =
      vlora::make_splits(model.config.vision, data_seed, cfg.dataset_size, cfg.eval_size, vlora::parse_corpus(args.corpus));
  cfg.train.shuffle_seed = data_seed ^ 0x5ca1ab1eULL;
  cfg.train.checkpoint_dir = out / "final";
  std::ofstream metrics(out / "metrics.jsonl");
  if (!metrics) throw UsageError("train: cannot write metrics to '" + (out / "metrics.jsonl").string() + "'");

  const auto result = vlora::train_loop(model, split.train, cfg.train, &metrics);
  std::printf("stage=%s steps=%zu deltas_per_image=%zu initial_loss=%.6f final100_loss=%.6f\n",
              std::string(vlora::stage_name(cfg.train.stage)).c_str(), result.log.size(),
              cfg.train.image_blind ? std::size_t{0} : model.plan.deltas_per_image(), result.initial_loss(),
              result.final_mean_loss(100));
  std::printf("checkpoint: %s\n", (out / "final").string().c_str());
  return kExitOk;
}

int run_train(const TrainArgs& args) {
  if (args.out.empty()) throw UsageError("train: --out is required");
  auto cfg = config_or_default(args.config);
  if (!args.stage.empty()) cfg.train.stage = vlora::parse_stage(args.stage);
  const bool shape_flags = !args.ablate_kinds.empty() || args.rank || args.pwg_blocks;
  if (!args.init_from.empty() && shape_flags)
    throw UsageError("train: --ablate-kinds/--rank/--pwg-blocks cannot change a model loaded with --init-from");
  if (!args.ablate_kinds.empty()) {
    cfg.kinds_label = args.ablate_kinds;
    cfg.model.kinds = vlora::parse_kind_set(args.ablate_kinds);
  }
  if (args.rank) cfg.model.generator.rank = *args.rank;
  if (args.pwg_blocks) cfg.model.generator.blocks = *args.pwg_blocks;
  if (args.steps) cfg.train.steps = *args.steps;
  if (args.lr) cfg.train.lr = *args.lr;
  if (args.image_blind) cfg.train.image_blind = true;
  if (vlora::parse_corpus(args.corpus) == vlora::Corpus::Warmup && !cfg.train.image_blind)
    throw UsageError("train: --corpus warmup is language-only and needs --image-blind");
  cfg.validate();
  const auto seed = resolve_seed(args.seed);
  const auto data_seed = args.data_seed.value_or(seed + 1);
  return args.fp64 ? train_with<double>(cfg, args, seed, data_seed) : train_with<float>(cfg, args, seed, data_seed);
}

struct EvalArgs {
  std::string checkpoint;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> data_seed;
  bool fp64 = false;
};

template <typename T>
int eval_with(const vlora::RunConfig& cfg, const EvalArgs& args, std::uint64_t data_seed) {
  const auto model = vlora::load_model<T>(args.checkpoint);
  const auto split = vlora::make_splits(model.config.vision, data_seed, cfg.dataset_size, cfg.eval_size);
  const double matched = vlora::eval_perplexity(model, split.eval, vlora::EvalMode::Matched);
  const double blind = vlora::eval_perplexity(model, split.eval, vlora::EvalMode::ImageBlind);
  const double shuffled = vlora::eval_perplexity(model, split.eval, vlora::EvalMode::ShuffledPairing);
  std::printf("{\"pairs\":%zu,\"ppl_matched\":%.6f,\"ppl_image_blind\":%.6f,\"ppl_shuffled\":%.6f}\n",
              split.eval.size(), matched, blind, shuffled);
  return kExitOk;
}

int run_eval(const EvalArgs& args) {
  const auto cfg = config_or_default(args.config);
  const auto data_seed = args.data_seed.value_or(resolve_seed(args.seed) + 1);
  return args.fp64 ? eval_with<double>(cfg, args, data_seed) : eval_with<float>(cfg, args, data_seed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perceptual-weights toy model: FLOPs analysis, verification, training and evaluation"};
  app.require_subcommand(1);

  FlopsArgs flops;
  auto* flops_cmd = app.add_subcommand("flops", "FLOPs of visual-token input vs merged low-rank perceptual weights");
  flops_cmd->add_option("--config", flops.config, "JSON run config (cost section)");
  // CLI11 would read an empty item as 0.
  const CLI::Validator not_empty([](std::string& v) { return v.empty() ? std::string("empty token count") : std::string(); },
                                 "");
  flops_cmd->add_option("--L", flops.L, "Visual token counts to sweep")->delimiter(',')->check(not_empty);
  flops_cmd->add_option("--out", flops.out, "CSV output path ('-' for stdout)");
  flops_cmd->add_flag("--table1", flops.table1, "Print the 7B-class reference GFLOPs next to the published values");

  VerifyArgs verify;
  auto* verify_cmd = app.add_subcommand("verify", "Run invariant suites on a tiny model");
  verify_cmd->add_option("--seed", verify.seed, "Seed (falls back to VLORA_SEED, then 0)");
  verify_cmd->add_flag("--fp64", verify.fp64, "Double precision everywhere; gradient tolerance 1e-6");
  verify_cmd->add_flag("--inject-fault", verify.inject_fault, "Perturb one up-factor entry at init");
  verify_cmd->add_option("--pairs", verify.pairs, "Random (image, text) pairs per suite");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train on synthetic image captions");
  train_cmd->add_option("--config", train.config, "JSON run config");
  train_cmd->add_option("--stage", train.stage, "pretrain (generators only) | finetune (generators + LM)");
  train_cmd->add_option("--ablate-kinds", train.ablate_kinds, "Weight-kind set: qkvom|qkvm|qkv|qko|qk");
  train_cmd->add_option("--rank", train.rank, "Perceptual weight rank r");
  train_cmd->add_option("--pwg-blocks", train.pwg_blocks, "Generator depth N");
  train_cmd->add_option("--steps", train.steps, "Optimizer steps");
  train_cmd->add_option("--lr", train.lr, "Peak learning rate");
  train_cmd->add_option("--seed", train.seed, "Model seed (falls back to VLORA_SEED, then 0)");
  train_cmd->add_option("--data-seed", train.data_seed, "Dataset seed (default: seed + 1)");
  train_cmd->add_option("--out", train.out, "Output directory (init/, final/, metrics.jsonl)");
  train_cmd->add_option("--init-from", train.init_from, "Start from a checkpoint directory");
  train_cmd->add_option("--corpus", train.corpus, "captions (image readout) | warmup (captions mixed with doubled text)");
  train_cmd->add_flag("--image-blind", train.image_blind, "Force deltas to zero (control run)");
  train_cmd->add_flag("--fp64", train.fp64, "Train in double precision");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Held-out perplexity: matched, image-blind and shuffled pairing");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint directory")->required();
  eval_cmd->add_option("--config", eval.config, "JSON run config (dataset sizes)");
  eval_cmd->add_option("--seed", eval.seed, "Seed (falls back to VLORA_SEED, then 0)");
  eval_cmd->add_option("--data-seed", eval.data_seed, "Dataset seed (default: seed + 1)");
  eval_cmd->add_flag("--fp64", eval.fp64, "Evaluate in double precision");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*flops_cmd) return run_flops(flops);
    if (*verify_cmd) return run_verify(verify);
    if (*train_cmd) return run_train(train);
    if (*eval_cmd) return run_eval(eval);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const vlora::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const vlora::ContractError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failed: %s\n", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}
