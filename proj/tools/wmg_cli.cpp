#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "wmg/pipeline.hpp"

using namespace wmg;
namespace fs = std::filesystem;

namespace {

struct common_options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* app, common_options& o, bool out_required = true) {
  app->add_option("--config", o.config, "JSON config file (comments allowed)");
  auto* out = app->add_option("--out", o.out, "output path");
  if (out_required) out->required();
  app->add_option("--seed", o.seed, "root seed (overrides the config)");
}

pipeline_config resolve_config(const common_options& o) {
  auto cfg = o.config.empty() ? pipeline_config{} : load_config(o.config);
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.train.seed = cfg.seed;
    cfg.frontend.seed = mix_seed(cfg.seed, 0xf0);
  }
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
}

perceptual_frontend obtain_frontend(const std::string& path, const pipeline_config& cfg) {
  if (!path.empty()) return perceptual_frontend::load_file(path);
  std::cerr << "no --frontend given: pretraining one from the config\n";
  const auto pr = pretrain_frontend(render_all(enumerate_split(split_kind::train, cfg.canvas), cfg.canvas),
                                    gate_dataset(cfg.canvas), cfg.canvas, cfg.frontend);
  if (!pr.gate.passed) throw stage_failure("frontend", "decodability gate not met");
  return pr.frontend;
}

diet diet_for_tasks(const std::string& tasks, int max_n) {
  if (tasks == "all") return make_diet(diet_mode::mtmf, std::nullopt, std::nullopt, max_n);
  const auto t = parse_task(tasks);
  return make_diet(diet_mode::stsf, t.n_back, t.feat, max_n);
}

void print_eval(const eval_report& r) {
  std::cout << "iterations " << r.iterations << "  train " << format_value(r.train.overall) << "  novel_angle "
            << format_value(r.novel_angle.overall) << "  novel_identity " << format_value(r.novel_identity.overall) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Working-memory geometry workbench"};
  app.require_subcommand(1);

  // gen-stimuli
  common_options gen;
  std::string split_name = "train";
  int gen_n = 256;
  auto* gen_cmd = app.add_subcommand("gen-stimuli", "Render a random sample of one stimulus split");
  add_common(gen_cmd, gen);
  gen_cmd->add_option("--split", split_name, "train | novel_angle | novel_identity");
  gen_cmd->add_option("--n", gen_n, "number of images")->check(CLI::PositiveNumber);

  // pretrain-frontend
  common_options pre;
  auto* pre_cmd = app.add_subcommand("pretrain-frontend", "Pretrain the convolutional frontend and run the decodability gate");
  add_common(pre_cmd, pre);

  // train
  common_options tr;
  std::string tr_arch = "gru", tr_diet = "mtmf", tr_frontend;
  std::optional<index_t> tr_hidden;
  std::optional<int> tr_iters;
  auto* tr_cmd = app.add_subcommand("train", "Train one recurrent model");
  add_common(tr_cmd, tr);
  tr_cmd->add_option("--arch", tr_arch, "vanilla | gru | lstm");
  tr_cmd->add_option("--diet", tr_diet, "mtmf | stmf:<n> | stsf:<n>:<feature>");
  tr_cmd->add_option("--hidden", tr_hidden, "hidden size");
  tr_cmd->add_option("--iters", tr_iters, "maximum iterations");
  tr_cmd->add_option("--frontend", tr_frontend, "pretrained frontend file");

  // sweep
  common_options sw;
  std::vector<std::string> sw_archs{"vanilla", "gru", "lstm"};
  std::vector<index_t> sw_hidden{32, 64, 128};
  std::string sw_diet = "mtmf", sw_frontend;
  auto* sw_cmd = app.add_subcommand("sweep", "Train every architecture at several hidden sizes");
  add_common(sw_cmd, sw);
  sw_cmd->add_option("--archs", sw_archs, "architectures");
  sw_cmd->add_option("--hidden", sw_hidden, "hidden sizes");
  sw_cmd->add_option("--diet", sw_diet, "training diet");
  sw_cmd->add_option("--frontend", sw_frontend, "pretrained frontend file");

  // record
  common_options rc;
  std::string rc_ckpt, rc_frontend, rc_task = "all", rc_split = "train";
  int rc_n = 400;
  auto* rc_cmd = app.add_subcommand("record", "Record hidden activations of a trained model");
  add_common(rc_cmd, rc);
  rc_cmd->add_option("--ckpt", rc_ckpt, "checkpoint file")->required();
  rc_cmd->add_option("--frontend", rc_frontend, "pretrained frontend file");
  rc_cmd->add_option("--task", rc_task, "all or a task such as 2back-L");
  rc_cmd->add_option("--split", rc_split, "stimulus split");
  rc_cmd->add_option("--n", rc_n, "trials per task")->check(CLI::PositiveNumber);

  // decode
  common_options dc;
  std::string dc_bank, dc_feature = "location", dc_space = "encoding:0", dc_task;
  auto* dc_cmd = app.add_subcommand("decode", "Fit a decoder family and its cross-task generalization matrix");
  add_common(dc_cmd, dc);
  dc_cmd->add_option("--bank", dc_bank, "activation bank")->required();
  dc_cmd->add_option("--feature", dc_feature, "location | identity | category");
  dc_cmd->add_option("--space", dc_space, "perceptual:i | encoding:i | memory:i:t | timestep:t");
  dc_cmd->add_option("--task", dc_task, "restrict to one task");

  // geometry
  common_options ge;
  std::string ge_mode, ge_bank, ge_decoders, ge_ckpt, ge_frontend, ge_task = "1back-L";
  auto* ge_cmd = app.add_subcommand("geometry", "Orthogonalization, Procrustes, swap or causal analyses");
  add_common(ge_cmd, ge);
  ge_cmd->add_option("mode", ge_mode, "ortho | procrustes | swap | causal")
      ->required()
      ->check(CLI::IsMember({"ortho", "procrustes", "swap", "causal"}));
  ge_cmd->add_option("--bank", ge_bank, "activation bank")->required();
  ge_cmd->add_option("--decoders", ge_decoders, "decoder archive (causal: first set is perturbed)");
  ge_cmd->add_option("--ckpt", ge_ckpt, "checkpoint (causal)");
  ge_cmd->add_option("--frontend", ge_frontend, "pretrained frontend (causal)");
  ge_cmd->add_option("--task", ge_task, "task for procrustes, swap and causal");

  // report
  common_options rp;
  std::string rp_run;
  auto* rp_cmd = app.add_subcommand("report", "Assemble a report bundle from a pipeline output directory");
  add_common(rp_cmd, rp);
  rp_cmd->add_option("--run", rp_run, "pipeline output directory")->required();

  // run
  common_options rn;
  auto* rn_cmd = app.add_subcommand("run", "Run the full pipeline");
  add_common(rn_cmd, rn);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc_parse = app.exit(e);
    return rc_parse == 0 ? 0 : 2;
  }

  try {
    if (*gen_cmd) {
      const auto cfg = resolve_config(gen);
      const auto split = parse_split(split_name);
      rng_t rng(mix_seed(cfg.seed, 0x57));
      std::vector<stimulus_spec> specs;
      for (int i = 0; i < gen_n; ++i) specs.push_back(sample_split(rng, split, cfg.canvas));
      const auto data = render_all(specs, cfg.canvas);
      fs::create_directories(gen.out);
      write_image_blob((fs::path(gen.out) / "images.bin").string(), data.images, cfg.canvas.height, cfg.canvas.width);
      write_text(fs::path(gen.out) / "attributes.csv", attribute_csv(data.specs));
      std::cout << "wrote " << gen_n << " images to " << gen.out << '\n';
    } else if (*pre_cmd) {
      const auto cfg = resolve_config(pre);
      const auto pr = pretrain_frontend(render_all(enumerate_split(split_kind::train, cfg.canvas), cfg.canvas),
                                        gate_dataset(cfg.canvas), cfg.canvas, cfg.frontend);
      const nlohmann::json gate{{"category", pr.gate.category}, {"identity", pr.gate.identity},
                                {"location", pr.gate.location}, {"passed", pr.gate.passed}, {"epochs", pr.epochs}};
      std::cout << gate.dump() << '\n';
      if (!pr.gate.passed) throw stage_failure("pretrain-frontend", "decodability gate not met");
      if (fs::path(pre.out).has_parent_path()) fs::create_directories(fs::path(pre.out).parent_path());
      pr.frontend.save_file(pre.out);
    } else if (*tr_cmd) {
      auto cfg = resolve_config(tr);
      if (tr_hidden) cfg.hidden = *tr_hidden;
      if (tr_iters) cfg.train.max_iters = *tr_iters;
      cfg.validate();
      const auto d = parse_diet_entry(tr_diet);
      arch a;
      try {
        a = parse_arch(tr_arch);
      } catch (const std::exception&) {
        throw config_error("unknown architecture: " + tr_arch);
      }
      const auto frontend = obtain_frontend(tr_frontend, cfg);
      embedding_cache cache(frontend, cfg.canvas);
      rng_t rng(mix_seed(cfg.seed, 0x5eed + static_cast<std::uint64_t>(a)));
      auto net = init_model(a, cfg.hidden, cache.out_dim(), 3 + cfg.max_n, rng);
      fs::create_directories(tr.out);
      auto res = train(std::move(net), d.make(cfg.max_n), cache, cfg.train,
                       cfg.train.checkpoint_every > 0 ? (fs::path(tr.out) / "checkpoints").string() : std::string{}, {},
                       cfg.max_n);
      save_checkpoint((fs::path(tr.out) / "model.ckpt").string(), res.net,
                      {res.report.iterations, {}, cfg.manifest_hash()});
      write_text(fs::path(tr.out) / "eval.json", eval_json(res.report).dump(2) + "\n");
      write_text(fs::path(tr.out) / "manifest.json",
                 nlohmann::json{{"manifest_hash", cfg.manifest_hash()},
                                {"config", cfg.to_json()},
                                {"arch", tr_arch},
                                {"diet", d.spec()},
                                {"frontend_hash", tr_frontend.empty() ? "" : file_hash(tr_frontend)},
                                {"timestamps", {{"finished", utc_now()}}}}
                         .dump(2) + "\n");
      print_eval(res.report);
    } else if (*sw_cmd) {
      const auto cfg = resolve_config(sw);
      std::vector<arch> archs;
      for (const auto& s : sw_archs) {
        try {
          archs.push_back(parse_arch(s));
        } catch (const std::exception&) {
          throw config_error("unknown architecture: " + s);
        }
      }
      const auto frontend = obtain_frontend(sw_frontend, cfg);
      embedding_cache cache(frontend, cfg.canvas);
      const auto rows = size_sweep(archs, sw_hidden, parse_diet_entry(sw_diet).make(cfg.max_n), cache, cfg.train, cfg.max_n);
      report_table t{"sweep", {"arch", "hidden", "parameters", "train", "novel_angle", "novel_identity", "iterations"}, {}};
      for (const auto& r : rows)
        t.rows.push_back({to_string(r.architecture), std::to_string(r.hidden), std::to_string(r.parameters),
                          format_value(r.report.train.overall), format_value(r.report.novel_angle.overall),
                          format_value(r.report.novel_identity.overall), std::to_string(r.report.iterations)});
      write_text(fs::path(sw.out) / "sweep.csv", t.csv());
      std::cout << t.csv();
    } else if (*rc_cmd) {
      const auto cfg = resolve_config(rc);
      const auto ck = load_checkpoint(rc_ckpt);
      const auto frontend = obtain_frontend(rc_frontend, cfg);
      embedding_cache cache(frontend, cfg.canvas);
      auto bank = record(ck.net, cache, diet_for_tasks(rc_task, cfg.max_n), parse_split(rc_split), rc_n,
                         mix_seed(cfg.seed, 0xb4c), cfg.train.trials, cfg.max_n);
      bank.manifest_hash = ck.meta.manifest_hash;
      if (fs::path(rc.out).has_parent_path()) fs::create_directories(fs::path(rc.out).parent_path());
      save_bank(bank, rc.out);
      std::cout << "recorded " << bank.distinct_tasks().size() << " tasks into " << rc.out << '\n';
    } else if (*dc_cmd) {
      const auto cfg = resolve_config(dc);
      const auto bank = load_bank(dc_bank);
      const auto f = parse_feature(dc_feature);
      auto q = parse_space(dc_space, f);
      if (!dc_task.empty()) q = q.with_task(parse_task(dc_task));
      const auto set = fit_set(bank, q, cfg.svm);
      fs::create_directories(dc.out);
      save_decoder_sets((fs::path(dc.out) / "decoders.bin").string(), {set});
      analysis_outputs out;
      out.manifest_hash = bank.manifest_hash;
      const auto tasks = bank.distinct_tasks();
      if (tasks.size() >= 2 && (q.kind == space_kind::encoding || q.kind == space_kind::perceptual)) {
        const auto name = "cross_task_" + dc_feature + "_" + q.label().substr(0, q.label().find('/'));
        detail::attempt(out, name, [&] { out.matrices.emplace_back(name, cross_task_matrix(bank, f, q.stimulus, tasks, cfg.svm)); });
      }
      emit_report(out).write(dc.out);
      std::cout << q.label() << " cv_accuracy " << format_value(set.cv_accuracy)<< " C " << set.decoders.front().c << '\n';
    } else if (*ge_cmd) {
      const auto cfg = resolve_config(ge);
      const auto bank = load_bank(ge_bank);
      const auto task = parse_task(ge_task);
      analysis_outputs out;
      out.manifest_hash = bank.manifest_hash;
      fit_cache memo;
      const std::string label = "bank";
      if (ge_mode == "ortho") {
        run_ortho_analysis(cfg, bank, label, out);
      } else if (ge_mode == "procrustes" || ge_mode == "swap") {
        alignment_grid_options opt;
        opt.svm = cfg.svm;
        opt.max_lag = task.n_back + 1;
        const auto grid = build_alignment_grid(bank, task.feat, task, opt, &memo);
        if (ge_mode == "swap") {
          out.expected.push_back("swap_" + label);
          out.swaps.emplace_back("swap_" + label, swap_test(grid, 1));
        } else {
          std::vector<reconstruction_row> rows;
          for (const auto& [key, e] : grid)
            rows.push_back({task, task.feat, key.first, key.second, e.target.accuracy(e.target_slice.x, e.target_slice.y),
                            reconstruct_decoders(e.alignment, e.source, e.target, e.target_slice.x, e.target_slice.y),
                            e.alignment.rank_deficient});
          out.expected.push_back("procrustes_" + label);
          out.reconstructions.emplace_back("procrustes_" + label, rows);
        }
      } else {
        if (ge_ckpt.empty()) throw config_error("geometry causal needs --ckpt");
        const auto ck = load_checkpoint(ge_ckpt);
        const auto frontend = obtain_frontend(ge_frontend, cfg);
        embedding_cache cache(frontend, cfg.canvas);
        const auto q = space_query::encoding(0, task.feat).with_task(task);
        const auto set = ge_decoders.empty() ? fit_set(bank, q, cfg.svm) : load_decoder_sets(ge_decoders).at(0);
        const auto name = "perturbation_" + label + "_" + to_string(task);
        out.expected.push_back(name);
        out.perturbations.emplace_back(
            name, causal_perturb_set(ck.net, cache, set, task, default_magnitudes(cfg.perturb_points, cfg.perturb_extent),
                                     mean_row_norm(slice(bank, q).x), cfg.perturb_trials, cfg.seed, cfg.max_n));
      }
      fs::create_directories(ge.out);
      const auto bundle = emit_report(out);
      bundle.write(ge.out);
      std::cout << bundle.summary.dump(2) << '\n';
    } else if (*rp_cmd) {
      resolve_config(rp);
      analysis_outputs merged;
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(rp_run))
        if (e.path().filename() == "decode.json" || e.path().filename() == "geometry.json") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        std::ifstream is(f);
        try {
          merged.merge(analysis_from_json(nlohmann::json::parse(is)));
        } catch (const nlohmann::json::exception& e) {
          throw integrity_error("cannot parse " + f.string() + ": " + e.what());
        }
      }
      const auto bundle = emit_report(merged);
      bundle.write(rp.out);
      std::cout << bundle.summary.dump(2) << '\n';
    } else if (*rn_cmd) {
      const auto cfg = resolve_config(rn);
      const auto res = run_pipeline(cfg, rn.out, &std::cerr);
      std::cout << res.bundle.summary.dump(2) << '\n';
    }
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const integrity_error& e) {
    std::cerr << "integrity error: " << e.what() << '\n';
    return 4;
  } catch (const stage_failure& e) {
    std::cerr << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "stage failure: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
