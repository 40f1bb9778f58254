#include "wsco/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace wsco::kernels {

#ifndef WSCO_HAVE_AVX2
const Backend* avx2_backend() { return nullptr; }
#endif

const Backend& active() {
    static const Backend* chosen = [] {
        const char* env = std::getenv("WSCO_KERNELS");
        if (env && std::strcmp(env, "scalar") == 0) return &scalar_backend();
        if (const Backend* simd = avx2_backend()) return simd;
        return &scalar_backend();
    }();
    return *chosen;
}

}  // namespace wsco::kernels
