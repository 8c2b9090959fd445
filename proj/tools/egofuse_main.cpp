// Command line entry point. Subcommands are registered in pipeline.cpp once
// the pipeline exists; for now this only exposes model archive utilities so
// the build has a runnable artifact from day one.

#include <cstdio>
#include <exception>

#include <CLI11.hpp>

#include "egofuse/body_model.hpp"

int main(int argc, char** argv) {
  CLI::App app{"egocentric motion fusion toolkit"};
  app.require_subcommand(1);

  auto* model = app.add_subcommand("model", "body model archive utilities");
  model->require_subcommand(1);

  std::string in_path, out_path;
  auto* imp = model->add_subcommand("import", "convert a skinned-body JSON export");
  imp->add_option("input", in_path, "JSON file")->required();
  imp->add_option("output", out_path, "archive to write")->required();

  auto* info = model->add_subcommand("info", "print archive dimensions");
  info->add_option("input", in_path, "archive file")->required();

  double density = 1.0;
  auto* synth = model->add_subcommand("synth", "write the built-in capsule body");
  synth->add_option("output", out_path, "archive to write")->required();
  synth->add_option("--density", density, "vertex density scale (0,1]");

  CLI11_PARSE(app, argc, argv);

  try {
    if (imp->parsed()) {
      egofuse::body::save_model(egofuse::body::from_smpl_json(in_path), out_path);
    } else if (info->parsed()) {
      const auto m = egofuse::body::load_model(in_path);
      std::printf("joints %d vertices %d faces %zu shape_basis %d regions %zu\n", m.joints,
                  m.vertices, m.faces.size(), m.shape_basis, m.region_names.size());
      std::printf("left_foot %zu right_foot %zu pelvis %d head %d\n", m.left_foot.size(),
                  m.right_foot.size(), m.pelvis_joint, m.head_joint);
    } else if (synth->parsed()) {
      egofuse::body::save_model(egofuse::body::make_test_body(density), out_path);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
