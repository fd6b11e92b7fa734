#pragma once

namespace dslam {

enum class ModelMode { Handcrafted, Learned };

inline const char* mode_letter(ModelMode m) { return m == ModelMode::Learned ? "l" : "h"; }

}  // namespace dslam
