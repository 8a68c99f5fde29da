#include "lms/app/segment_dump.hpp"

#include <cmath>
#include <cstdio>

#include "lms/core/metrics.hpp"
#include "lms/core/tensor_io.hpp"

namespace lms::app {

DumpSummary segment_dump(const Episode& episode, const training::ParamStore& params,
                         const training::ModelConfig& cfg, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const training::ForwardResult r = training::lms_forward(episode, params, cfg);
  DumpSummary s;

  const auto dump = [&](int k, const core::SoftMask& u, const core::DualField& v) {
    const std::string tag = std::to_string(k);
    const auto mask_path = out_dir / ("mask_" + tag + ".pgm");
    core::write_pgm(mask_path, core::binarize(u));
    const ScalarGrid v1 = core::channel_of(v, 0);
    const auto v_raw = out_dir / ("v1_" + tag + ".lmt");
    const auto v_img = out_dir / ("v1_" + tag + ".pgm");
    core::write_field(v_raw, v1);
    core::write_pgm(v_img, core::minmax_normalize(v1));
    ScalarGrid e = core::entropy_map(u);
    for (double& x : e.values()) x /= std::log(2.0);
    const auto e_path = out_dir / ("entropy_" + tag + ".pgm");
    core::write_pgm(e_path, e);
    s.files.insert(s.files.end(), {mask_path, v_raw, v_img, e_path});
    ++s.stages_dumped;
  };

  dump(0, r.u_init, core::make_dual(r.u_init.shape()));
  for (std::size_t k = 0; k < r.stages.size(); ++k) dump(static_cast<int>(k) + 1, r.stages[k].u, r.stages[k].v);

  const BinaryMask final_mask = training::predict_mask(r, episode.query_image.shape());
  const auto final_path = out_dir / "final_mask.pgm";
  core::write_pgm(final_path, final_mask);
  s.files.push_back(final_path);
  if (episode.query_gt) {
    s.dice = core::dice(final_mask, *episode.query_gt);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g\n", *s.dice);
    const auto dice_path = out_dir / "dice.txt";
    const std::string text(buf);
    core::write_bytes(dice_path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
    s.files.push_back(dice_path);
  }
  return s;
}

}  // namespace lms::app
