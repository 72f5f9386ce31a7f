#include "attukan/app/render.hpp"

#include <algorithm>
#include <stdexcept>

#include "attukan/data/dataset.hpp"
#include "attukan/data/preprocess.hpp"
#include "attukan/data/synth.hpp"

namespace attukan::app {

Tensor render_overlay(const Tensor& gray, const metrics::Mask& pred, const metrics::Mask& target) {
  const bool lead = gray.rank() == 3 && gray.dim(0) == 1;
  if (!(gray.rank() == 2 || lead)) throw DimensionError("overlay input must be [H,W] or [1,H,W], got " + to_string(gray.shape()));
  const std::size_t h = gray.dim(gray.rank() - 2), w = gray.dim(gray.rank() - 1);
  if (pred.height != h || pred.width != w || target.height != h || target.width != w)
    throw DimensionError("overlay masks do not match the " + std::to_string(h) + "x" + std::to_string(w) + " image");
  const std::size_t n = h * w;
  Tensor rgb({3, h, w});
  for (std::size_t i = 0; i < n; ++i) {
    const bool p = pred.px[i], t = target.px[i];
    double r, g, b;
    if (p && t) {
      r = 0, g = 1, b = 0;
    } else if (p) {
      r = 1, g = 1, b = 0;
    } else if (t) {
      r = 1, g = 0, b = 0;
    } else {
      r = g = b = std::clamp(gray[i], 0.0, 1.0);
    }
    rgb[i] = r;
    rgb[n + i] = g;
    rgb[2 * n + i] = b;
  }
  return rgb;
}

data::SegmentationSample resolve_sample(const std::string& spec, const RunConfig& cfg) {
  const auto colon = spec.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == spec.size())
    throw std::invalid_argument("sample spec must be synthetic:K or DIR:STEM, got '" + spec + "'");
  const std::string head = spec.substr(0, colon), tail = spec.substr(colon + 1);
  data::SegmentationSample s;
  if (head == "synthetic") {
    std::size_t k = 0;
    try {
      std::size_t used = 0;
      k = std::stoul(tail, &used);
      if (used != tail.size()) throw std::invalid_argument(tail);
    } catch (const std::logic_error&) {
      throw std::invalid_argument("synthetic sample index must be a nonnegative integer, got '" + tail + "'");
    }
    if (k >= cfg.dataset.count)
      throw std::invalid_argument("synthetic sample " + tail + " is outside the configured " +
                                  std::to_string(cfg.dataset.count) + "-image dataset");
    auto all = data::synth_dataset(cfg.dataset.synth, k + 1);
    s = std::move(all[k]);
  } else {
    bool found = false;
    for (auto& c : data::load_dataset_dir(head))
      if (c.id == tail) {
        s = std::move(c);
        found = true;
        break;
      }
    if (!found) throw std::invalid_argument("no sample named '" + tail + "' in " + head);
  }
  if (cfg.dataset.preprocess) s.image = data::preprocess(s.image, cfg.dataset.prep);
  return s;
}

}  // namespace attukan::app
