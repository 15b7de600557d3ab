// Copyright 2025-present the biomine authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>

namespace biomine::simd {

using DotFn = float (*)(const float*, const float*, std::size_t);

namespace scalar {
float dot(const float* a, const float* b, std::size_t n);
}

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
float dot(const float* a, const float* b, std::size_t n);
}
#endif

#if defined(__aarch64__)
namespace neon {
float dot(const float* a, const float* b, std::size_t n);
}
#endif

// Resolved once at startup from runtime CPU feature detection. The exhaustive
// similarity scan in the few-shot index funnels through this pointer.
extern const DotFn dot;

const char* active_kernel();

}  // namespace biomine::simd
