#include "lhdff/cli/commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lhdff/audio/wav.hpp"
#include "lhdff/checkpoint.hpp"
#include "lhdff/data/synth.hpp"
#include "lhdff/error.hpp"
#include "lhdff/infer/search.hpp"
#include "lhdff/text.hpp"

namespace lhdff::cli {

namespace {

using nlohmann::ordered_json;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::uint64_t parse_seed(const std::string& text, const char* what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string(what) + ": '" + text + "' is not a valid seed");
  }
}

// Config precedence: defaults < LHDFF_SEED < --config file < --set < flags.
struct ConfigFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::string variant;
  std::string corpus;
  std::string audio_dir;
  std::string seed;
  std::size_t epochs = 0;

  void attach(CLI::App& app) {
    app.add_option("--config", config, "flat key = value config file");
    app.add_option("--set", overrides, "override one config key (key=value), repeatable");
    app.add_option("--variant", variant, "lhdff, fusion, nonfusion, fusion-block2 or baseline-high");
    app.add_option("--corpus", corpus, "manifest CSV");
    app.add_option("--audio-dir", audio_dir, "directory holding the manifest's WAV files");
    app.add_option("--seed", seed, "global seed (falls back to LHDFF_SEED)");
    app.add_option("--epochs", epochs, "number of training epochs");
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (const char* env = std::getenv("LHDFF_SEED"); env != nullptr && *env != '\0') {
      cfg.train.seed = parse_seed(env, "LHDFF_SEED");
    }
    if (!config.empty()) cfg.merge_file(config);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!variant.empty()) cfg.set("variant", variant);
    if (!corpus.empty()) cfg.corpus = corpus;
    if (!audio_dir.empty()) cfg.audio_dir = audio_dir;
    if (!seed.empty()) cfg.train.seed = parse_seed(seed, "--seed");
    if (epochs > 0) cfg.train.epochs = epochs;
    cfg.validate();
    return cfg;
  }
};

data::CorpusManifest load_corpus(const RunConfig& cfg) {
  if (cfg.corpus.empty()) throw ConfigError("no corpus given (--corpus or corpus = ... in the config)");
  if (!std::filesystem::exists(cfg.corpus)) throw IoError("corpus manifest not found: " + cfg.corpus.string());
  return data::load_manifest_csv(cfg.corpus);
}

ordered_json report_json(const metrics::Report& r) {
  ordered_json j;
  j["bleu1"] = r.bleu1;
  j["bleu2"] = r.bleu2;
  j["bleu3"] = r.bleu3;
  j["bleu4"] = r.bleu4;
  j["rougeL"] = r.rouge_l;
  j["cider"] = r.cider;
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

// ---------------------------------------------------------------- gen

int cmd_gen(std::size_t clips, std::size_t captions, const std::string& seed_flag, const std::string& out_dir,
            std::ostream& out) {
  std::uint64_t seed = 0;
  if (!seed_flag.empty()) {
    seed = parse_seed(seed_flag, "--seed");
  } else if (const char* env = std::getenv("LHDFF_SEED"); env != nullptr && *env != '\0') {
    seed = parse_seed(env, "LHDFF_SEED");
  }
  const auto manifest = data::generate_corpus(out_dir, clips, captions, seed);
  out << "wrote " << manifest.records.size() << " clips to " << (std::filesystem::path(out_dir) / "wav").string()
      << " and " << (std::filesystem::path(out_dir) / "manifest.csv").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- train

int cmd_train(const ConfigFlags& flags, const std::string& out_flag, const std::string& resume, std::ostream& out,
              std::ostream& err) {
  RunConfig cfg = flags.resolve();
  if (!out_flag.empty()) cfg.out_dir = out_flag;
  if (cfg.out_dir.empty()) throw ConfigError("no output directory (--out or out_dir = ...)");
  const auto manifest = load_corpus(cfg);
  const auto data = prepare_data(cfg, manifest);
  const auto run = train_variant(cfg, data, cfg.out_dir, resume, err);
  out << "trained " << model::to_string(cfg.model.variant) << " for " << cfg.train.epochs << " epochs; "
      << report_json(run.report).dump() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- caption

std::vector<std::filesystem::path> wav_inputs(const std::filesystem::path& input) {
  if (!std::filesystem::exists(input)) throw IoError("input not found: " + input.string());
  if (!std::filesystem::is_directory(input)) return {input};
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(input)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .wav files in " + input.string());
  return files;
}

struct CaptionFlags {
  std::string checkpoint;
  std::string input;
  std::string config;
  std::string vocab;
  std::string variant;
  std::string out;
  std::size_t beam = 1;
  double length_penalty = 1.0;
  bool renormalize = false;
};

int cmd_caption(const CaptionFlags& f, std::ostream& out) {
  const std::filesystem::path ckpt = f.checkpoint;
  if (!std::filesystem::exists(ckpt)) throw IoError("checkpoint not found: " + ckpt.string());
  const auto cfg_path = f.config.empty() ? ckpt.parent_path() / "run.cfg" : std::filesystem::path(f.config);
  const auto vocab_path = f.vocab.empty() ? ckpt.parent_path() / "vocab.txt" : std::filesystem::path(f.vocab);
  RunConfig cfg = RunConfig::load(cfg_path);
  const auto vocab = model::Vocabulary::load(vocab_path);
  const auto records = checkpoint::read_file(ckpt);

  const auto stored = model::checkpoint_variant(records);
  if (!f.variant.empty()) {
    const auto requested = model::parse_variant(f.variant);
    if (stored && *stored != requested) {
      throw ConfigError("checkpoint variant " + model::to_string(*stored) + " does not match requested variant " +
                        model::to_string(requested));
    }
    cfg.model.variant = requested;
  }
  model::CaptionModel net(cfg.model, vocab.size(), cfg.train.seed);
  net.import_records(records);

  std::ostringstream lines;
  for (const auto& path : wav_inputs(f.input)) {
    const auto mel = audio::log_mel(audio::read_wav(path), cfg.mel);
    const auto memory = infer::encode_clips(net, {&mel});
    infer::ModelScorer scorer(net, memory);
    infer::Hypothesis best;
    if (f.beam <= 1) {
      best = infer::greedy_decode(scorer, net.decoder().max_len());
    } else {
      infer::BeamOptions opts;
      opts.width = f.beam;
      opts.max_len = net.decoder().max_len();
      opts.length_penalty = f.length_penalty;
      opts.renormalize = f.renormalize;
      best = infer::beam_decode(scorer, opts).front();
    }
    ordered_json j;
    j["clip_id"] = path.filename().string();
    j["caption"] = text::join(vocab.decode(best.caption()));
    j["score"] = best.score;
    lines << j.dump() << "\n";
  }
  if (f.out.empty()) {
    out << lines.str();
  } else {
    write_text(f.out, lines.str());
  }
  return kExitOk;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const std::string& candidates, const std::string& references, const std::string& out_path,
             std::ostream& out) {
  std::ifstream in(candidates);
  if (!in) throw IoError("cannot open candidates " + candidates);
  const auto refs = data::load_manifest_csv(references, "references");
  std::map<std::string, const data::ClipRecord*> by_id;
  for (const auto& r : refs.records) by_id[r.clip_id] = &r;

  std::vector<metrics::EvalPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const ordered_json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!j.is_object() || !j.contains("clip_id") || !j.contains("caption") || !j["clip_id"].is_string() ||
        !j["caption"].is_string()) {
      throw ParseError("candidate needs string fields clip_id and caption", line_no);
    }
    const auto id = j["clip_id"].get<std::string>();
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw ConfigError("no references for clip '" + id + "'");
    metrics::EvalPair pair;
    pair.candidate = text::tokenize(j["caption"].get<std::string>());
    for (const auto& c : it->second->captions) pair.references.push_back(text::tokenize(c));
    pairs.push_back(std::move(pair));
  }
  if (pairs.empty()) throw ConfigError("candidate file " + candidates + " is empty");
  const std::string report = report_json(metrics::evaluate(pairs)).dump(2) + "\n";
  out << report;
  if (!out_path.empty()) write_text(out_path, report);
  return kExitOk;
}

// ---------------------------------------------------------------- ablate

int cmd_ablate(const ConfigFlags& flags, const std::string& variants_flag, const std::string& seeds_flag,
               std::size_t gen_clips, std::size_t gen_captions, const std::string& out_flag, std::ostream& out,
               std::ostream& err) {
  RunConfig cfg = flags.resolve();
  if (!out_flag.empty()) cfg.out_dir = out_flag;
  std::vector<model::Variant> variants;
  for (const auto& v : split_list(variants_flag)) variants.push_back(model::parse_variant(v));
  if (variants.empty()) throw ConfigError("--variants is empty");
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(seeds_flag)) seeds.push_back(parse_seed(s, "--seeds"));
  if (seeds.empty()) seeds.push_back(cfg.train.seed);

  if (gen_clips > 0) {
    if (cfg.out_dir.empty()) throw ConfigError("--clips needs --out to place the generated corpus");
    const auto corpus_dir = cfg.out_dir / "corpus";
    data::generate_corpus(corpus_dir, gen_clips, gen_captions, cfg.train.seed);
    cfg.corpus = corpus_dir / "manifest.csv";
    cfg.audio_dir = corpus_dir / "wav";
  }
  const auto manifest = load_corpus(cfg);
  const auto data = prepare_data(cfg, manifest);
  const auto result = run_ablation(cfg, data, variants, seeds, err);

  const auto table = format_ablation_table(result);
  out << table;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    write_text(cfg.out_dir / "ablation.txt", table);
    write_text(cfg.out_dir / "ablation.json", ablation_json(result));
  }
  const bool all_ok = std::all_of(result.rows.begin(), result.rows.end(), [](const auto& r) { return r.ok; });
  return all_ok ? kExitOk : kExitPartial;
}

metrics::Report mean_report(const std::vector<metrics::Report>& reports) {
  metrics::Report m;
  for (const auto& r : reports) {
    m.bleu1 += r.bleu1;
    m.bleu2 += r.bleu2;
    m.bleu3 += r.bleu3;
    m.bleu4 += r.bleu4;
    m.rouge_l += r.rouge_l;
    m.cider += r.cider;
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, reports.size()));
  m.bleu1 /= n;
  m.bleu2 /= n;
  m.bleu3 /= n;
  m.bleu4 /= n;
  m.rouge_l /= n;
  m.cider /= n;
  return m;
}

}  // namespace

PreparedData prepare_data(const RunConfig& cfg, const data::CorpusManifest& manifest) {
  auto split = data::split_manifest(manifest, cfg.val_fraction);
  data::check_disjoint({&split.train, &split.val});
  PreparedData out;
  out.vocab = data::build_vocab(split.train, cfg.min_count);
  out.train = data::load_clips(split.train, cfg.resolved_audio_dir(), cfg.mel);
  out.val = data::load_clips(split.val, cfg.resolved_audio_dir(), cfg.mel);
  return out;
}

metrics::Report evaluate_greedy(model::CaptionModel& model, const model::Vocabulary& vocab,
                                const std::vector<data::CaptionedClip>& clips) {
  std::vector<metrics::EvalPair> pairs;
  constexpr std::size_t kChunk = 16;
  for (std::size_t start = 0; start < clips.size(); start += kChunk) {
    const std::size_t stop = std::min(clips.size(), start + kChunk);
    std::vector<const audio::MelSpectrogram*> mels;
    for (std::size_t i = start; i < stop; ++i) mels.push_back(&clips[i].mel);
    const auto memory = infer::encode_clips(model, mels);
    const auto hyps = infer::greedy_decode_batch(model, memory, model.decoder().max_len());
    for (std::size_t i = start; i < stop; ++i) {
      pairs.push_back({vocab.decode(hyps[i - start].caption()), clips[i].captions});
    }
  }
  return metrics::evaluate(pairs);
}

TrainedRun train_variant(const RunConfig& cfg, const PreparedData& data, const std::filesystem::path& out_dir,
                         const std::filesystem::path& resume, std::ostream& log) {
  model::CaptionModel net(cfg.model, data.vocab.size(), cfg.train.seed);
  if (!cfg.embeddings.empty()) net.decoder().load_embeddings(cfg.embeddings, data.vocab);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    cfg.save(out_dir / "run.cfg");
    data.vocab.save(out_dir / "vocab.txt");
  }
  train::TrainerOptions opts;
  opts.out_dir = out_dir;
  opts.eval_every = cfg.eval_every;
  train::Trainer trainer(net, data.vocab, cfg.train, data.train, data.val, opts);
  if (!resume.empty()) trainer.restore(checkpoint::read_file(resume));

  TrainedRun run;
  while (trainer.next_epoch() < cfg.train.epochs) {
    run.log.push_back(trainer.run_epoch());
    log << model::to_string(cfg.model.variant) << " seed " << cfg.train.seed << " "
        << train::to_json_line(run.log.back()) << "\n";
  }
  if (!out_dir.empty()) trainer.save(out_dir / "final.bin");
  run.report = evaluate_greedy(net, data.vocab, data.val.empty() ? data.train : data.val);
  return run;
}

AblationResult run_ablation(const RunConfig& base, const PreparedData& data, const std::vector<model::Variant>& variants,
                            const std::vector<std::uint64_t>& seeds, std::ostream& log) {
  AblationResult result;
  result.seeds = seeds;
  for (const auto variant : variants) {
    VariantResult row;
    row.variant = variant;
    try {
      for (const auto seed : seeds) {
        RunConfig cfg = base;
        cfg.model.variant = variant;
        cfg.train.seed = seed;
        std::filesystem::path dir;
        if (!base.out_dir.empty()) dir = base.out_dir / (model::to_string(variant) + "_seed" + std::to_string(seed));
        row.per_seed.push_back(train_variant(cfg, data, dir, {}, log).report);
      }
      row.mean = mean_report(row.per_seed);
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
      log << model::to_string(variant) << " failed: " << e.what() << "\n";
    }
    result.rows.push_back(std::move(row));
  }

  const auto find = [&](model::Variant v) -> const VariantResult* {
    for (const auto& r : result.rows) {
      if (r.variant == v && r.ok) return &r;
    }
    return nullptr;
  };
  const auto* lhdff = find(model::Variant::kLhdff);
  for (const auto other : {model::Variant::kBaselineHigh, model::Variant::kNonfusion}) {
    const auto* o = find(other);
    if (lhdff == nullptr || o == nullptr) continue;
    result.checks.push_back({"lhdff >= " + model::to_string(other) + " (mean BLEU-1)", lhdff->mean.bleu1, o->mean.bleu1,
                             lhdff->mean.bleu1 >= o->mean.bleu1});
  }
  return result;
}

std::string format_ablation_table(const AblationResult& result) {
  std::ostringstream t;
  t << std::left << std::setw(15) << "variant" << std::right;
  for (const char* h : {"BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "ROUGE-L", "CIDEr"}) t << std::setw(9) << h;
  t << "  status\n";
  t << std::fixed << std::setprecision(4);
  for (const auto& r : result.rows) {
    t << std::left << std::setw(15) << model::to_string(r.variant) << std::right;
    if (r.ok) {
      for (double v : {r.mean.bleu1, r.mean.bleu2, r.mean.bleu3, r.mean.bleu4, r.mean.rouge_l, r.mean.cider}) {
        t << std::setw(9) << v;
      }
      t << "  ok\n";
    } else {
      for (int i = 0; i < 6; ++i) t << std::setw(9) << "-";
      t << "  FAILED: " << r.error << "\n";
    }
  }
  t << "seeds:";
  for (auto s : result.seeds) t << " " << s;
  t << "\n";
  for (const auto& c : result.checks) {
    t << (c.holds ? "holds   " : "VIOLATED") << "  " << c.claim << ": " << c.left << " vs " << c.right << "\n";
  }
  return t.str();
}

std::string ablation_json(const AblationResult& result) {
  ordered_json j;
  j["seeds"] = result.seeds;
  j["rows"] = ordered_json::array();
  for (const auto& r : result.rows) {
    ordered_json row;
    row["variant"] = model::to_string(r.variant);
    row["status"] = r.ok ? "ok" : "failed";
    if (r.ok) {
      row["mean"] = report_json(r.mean);
      row["per_seed"] = ordered_json::array();
      for (const auto& s : r.per_seed) row["per_seed"].push_back(report_json(s));
    } else {
      row["error"] = r.error;
    }
    j["rows"].push_back(std::move(row));
  }
  j["checks"] = ordered_json::array();
  for (const auto& c : result.checks) {
    j["checks"].push_back({{"claim", c.claim}, {"left", c.left}, {"right", c.right}, {"holds", c.holds}});
  }
  return j.dump(2) + "\n";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Audio captioning with low- and high-dimensional feature fusion", "lhdff"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "generate a synthetic audio-caption corpus");
  std::size_t gen_clips = 0;
  std::size_t gen_captions = 5;
  std::string gen_seed;
  std::string gen_out;
  gen->add_option("--clips", gen_clips, "number of clips")->required()->check(CLI::PositiveNumber);
  gen->add_option("--captions-per-clip", gen_captions, "captions per clip")->check(CLI::Range(1, 5));
  gen->add_option("--seed", gen_seed, "corpus seed (falls back to LHDFF_SEED)");
  gen->add_option("--out", gen_out, "output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "train one model variant");
  ConfigFlags train_flags;
  train_flags.attach(*train_cmd);
  std::string train_out;
  std::string train_resume;
  train_cmd->add_option("--out", train_out, "output directory for checkpoints and logs");
  train_cmd->add_option("--resume", train_resume, "checkpoint to resume from");

  auto* caption = app.add_subcommand("caption", "caption WAV files with a trained checkpoint");
  CaptionFlags cap;
  caption->add_option("--checkpoint", cap.checkpoint, "checkpoint file")->required();
  caption->add_option("--input", cap.input, "WAV file or directory")->required();
  caption->add_option("--beam", cap.beam, "beam width (1 = greedy)")->check(CLI::PositiveNumber);
  caption->add_option("--config", cap.config, "run config (default: run.cfg next to the checkpoint)");
  caption->add_option("--vocab", cap.vocab, "vocabulary (default: vocab.txt next to the checkpoint)");
  caption->add_option("--variant", cap.variant, "expected model variant");
  caption->add_option("--length-penalty", cap.length_penalty, "beam length penalty exponent");
  caption->add_flag("--renormalize", cap.renormalize, "log-normalize fused rows during beam search");
  caption->add_option("--out", cap.out, "write JSON lines here instead of stdout");

  auto* eval = app.add_subcommand("eval", "score candidate captions against references");
  std::string eval_cands;
  std::string eval_refs;
  std::string eval_out;
  eval->add_option("--candidates", eval_cands, "candidate JSON lines")->required();
  eval->add_option("--references", eval_refs, "reference CSV")->required();
  eval->add_option("--out", eval_out, "also write the report here");

  auto* ablate = app.add_subcommand("ablate", "train and compare several variants on one corpus");
  ConfigFlags ablate_flags;
  ablate_flags.attach(*ablate);
  std::string ablate_variants = "lhdff,fusion,nonfusion,fusion-block2,baseline-high";
  std::string ablate_seeds;
  std::string ablate_out;
  std::size_t ablate_clips = 0;
  std::size_t ablate_captions = 5;
  ablate->add_option("--variants", ablate_variants, "comma separated variants, in table order");
  ablate->add_option("--seeds", ablate_seeds, "comma separated training seeds (default: --seed)");
  ablate->add_option("--clips", ablate_clips, "generate a synthetic corpus of this size under --out");
  ablate->add_option("--captions-per-clip", ablate_captions, "captions per generated clip")->check(CLI::Range(1, 5));
  ablate->add_option("--out", ablate_out, "output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(gen_clips, gen_captions, gen_seed, gen_out, out);
    if (*train_cmd) return cmd_train(train_flags, train_out, train_resume, out, err);
    if (*caption) return cmd_caption(cap, out);
    if (*eval) return cmd_eval(eval_cands, eval_refs, eval_out, out);
    if (*ablate) {
      return cmd_ablate(ablate_flags, ablate_variants, ablate_seeds, ablate_clips, ablate_captions, ablate_out, out,
                        err);
    }
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitPartial;
  }
  return kExitUsage;
}

}  // namespace lhdff::cli
