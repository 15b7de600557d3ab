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

#include "biomine/simd.hpp"

namespace biomine::simd {

namespace {

struct Selection {
  DotFn fn;
  const char* name;
};

Selection select() {
#if defined(__x86_64__) || defined(_M_X64)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
    return {avx2::dot, "avx2"};
  }
#endif
#if defined(__aarch64__)
  return {neon::dot, "neon"};
#endif
  return {scalar::dot, "scalar"};
}

const Selection g_selection = select();

}  // namespace

const DotFn dot = g_selection.fn;

const char* active_kernel() { return g_selection.name; }

}  // namespace biomine::simd
