#include "core/gemm.hpp"

namespace acwm::core {

void gemm_nn_acc(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
    // i-k-j loop: streams B and C rows through the vector units.
    for (int64_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const float av = arow[p];
            const float* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt_acc(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
    // Dot products over contiguous rows of A and B.
    for (int64_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const float* brow = b + j * k;
            float acc = 0.0f;
            for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

void gemm_tn_acc(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t p = 0; p < k; ++p) {
        const float* arow = a + p * m;
        const float* brow = b + p * n;
        for (int64_t i = 0; i < m; ++i) {
            const float av = arow[i];
            float* crow = c + i * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace acwm::core
