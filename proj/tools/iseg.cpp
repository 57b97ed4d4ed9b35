#include <CLI11.hpp>
#include <cstdio>

#include "iseg/cli_commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Integer-only ViT segmentation engine and PTQ toolkit"};
  app.require_subcommand(1);

  iseg::SynthArgs synth;
  CLI::App* s = app.add_subcommand("synth", "generate a synthetic dataset");
  s->add_option("--out", synth.out_dir, "output directory")->required();
  s->add_option("--n", synth.n, "number of samples");
  s->add_option("--classes", synth.classes, "number of classes");
  s->add_option("--size", synth.size, "square image size");
  s->add_option("--patch", synth.patch, "patch side of the target model");
  s->add_option("--seed", synth.seed, "rng seed");
  s->add_option("--model-out", synth.model_out,
                "also write a structured FP32 checkpoint here");
  s->add_option("--embed-dim", synth.embed_dim, "model width for --model-out");
  s->add_option("--depth", synth.enc_depth, "encoder depth for --model-out");
  s->add_option("--heads", synth.heads, "attention heads for --model-out");

  iseg::CalibrateArgs cal;
  CLI::App* c = app.add_subcommand("calibrate", "PTQ-calibrate an FP32 model");
  c->add_option("--model", cal.model, "FP32 container")->required();
  c->add_option("--data", cal.data_dir, "calibration image directory")->required();
  c->add_option("--out", cal.out, "INT container to write")->required();
  c->add_option("--samples", cal.samples, "calibration sample count");
  c->add_option("--alpha", cal.alpha, "EMA momentum");
  c->add_option("--lambda", cal.lambda, "GELU clamp relaxation");
  c->add_option("--k-inter", cal.k_inter, "GELU intermediate precision");

  iseg::InferArgs inf;
  CLI::App* i = app.add_subcommand("infer", "run inference on one image");
  i->add_option("--model", inf.model, "container")->required();
  i->add_option("--input", inf.input, "image (.iseg tensor or .pgm)")->required();
  i->add_option("--out", inf.out_map, "class-map PGM to write")->required();
  i->add_option("--logits", inf.out_logits, "optional logits container");
  i->add_option("--mode", inf.mode, "auto | int | fp32");
  i->add_flag("--trace-fp-ops", inf.trace_fp_ops,
              "print the fp-op count and require zero in INT mode");

  iseg::CompareArgs cmp;
  CLI::App* m = app.add_subcommand(
      "compare", "variant grid report: {L2 on/off} x {nearest/bilinear}");
  m->add_option("--ref", cmp.ref_model, "FP32 reference container")->required();
  m->add_option("--test", cmp.test_model, "container under test")->required();
  m->add_option("--data", cmp.data_dir, "image directory")->required();
  m->add_option("--labels", cmp.labels_dir, "label directory (enables mIoU)");
  m->add_option("--out", cmp.out_csv, "CSV report path")->required();
  m->add_option("--samples", cmp.samples, "sample count (0 = all)");

  iseg::AblateArgs abl;
  CLI::App* a = app.add_subcommand("ablate-gelu",
                                   "GELU fidelity: relaxed vs baseline clamp");
  a->add_option("--model", abl.model, "FP32 container")->required();
  a->add_option("--data", abl.data_dir, "image directory")->required();
  a->add_option("--out", abl.out_csv, "CSV report path")->required();
  a->add_option("--samples", abl.samples, "calibration sample count");
  a->add_option("--alpha", abl.alpha, "EMA momentum");

  iseg::StatsArgs st;
  CLI::App* t = app.add_subcommand("stats", "container size and bit traffic");
  t->add_option("--model", st.model, "container")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (s->parsed()) return iseg::cmd_synth(synth);
    if (c->parsed()) return iseg::cmd_calibrate(cal);
    if (i->parsed()) return iseg::cmd_infer(inf);
    if (m->parsed()) return iseg::cmd_compare(cmp);
    if (a->parsed()) return iseg::cmd_ablate_gelu(abl);
    if (t->parsed()) return iseg::cmd_stats(st);
  } catch (const iseg::Error& e) {
    std::fprintf(stderr, "error %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
