#include "crow/dataset.hpp"

namespace crow {

void Dataset::validate() const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SequenceSample& s = samples[i];
    if (s.frames.size() != meta.T || s.covariates.size() != meta.T) {
      throw std::invalid_argument("Dataset: sample " + std::to_string(i) + " has " +
                                  std::to_string(s.frames.size()) + " frames / " +
                                  std::to_string(s.covariates.size()) + " covariates, expected T=" +
                                  std::to_string(meta.T));
    }
    for (const Tensor& f : s.frames) {
      if (f.width() != meta.d_x) {
        throw std::invalid_argument("Dataset: sample " + std::to_string(i) + " frame width " +
                                    f.shape_str() + " != d_x " + std::to_string(meta.d_x));
      }
      f.require_finite("Dataset frame");
    }
    for (const Tensor& y : s.covariates) {
      if (y.width() != meta.d_y) {
        throw std::invalid_argument("Dataset: sample " + std::to_string(i) + " covariate width " +
                                    y.shape_str() + " != d_y " + std::to_string(meta.d_y));
      }
      y.require_finite("Dataset covariate");
    }
  }
}

}  // namespace crow
