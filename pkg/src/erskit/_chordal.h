/* Dot-product micro-kernel for the chordal distance matrix.
 *
 * Computes a 4-row by 8-column block of dot products against a packed panel
 * buffer. Every entry is accumulated as one sequential sum over k with a
 * separate multiply and add (no FMA), so the AVX and portable paths produce
 * bitwise identical results, independent of blocking and thread count.
 *
 * Panel layout: P[(p * d + k) * 4 + jj] = x[4 * p + jj, k].
 */
#ifndef ERSKIT_CHORDAL_H
#define ERSKIT_CHORDAL_H

#include <stddef.h>

#if defined(__GNUC__) && (defined(__x86_64__) || defined(__i386__))
#include <immintrin.h>
#define ERSKIT_HAVE_AVX_PATH 1
#endif

static void erskit_block_portable(const double *x, const double *P, ptrdiff_t d,
                                  const ptrdiff_t rows[4], ptrdiff_t p, double out[32])
{
    double acc[32];
    const double *q0 = P + p * d * 4;
    const double *q1 = q0 + d * 4;
    ptrdiff_t r, k, jj;
    for (r = 0; r < 32; r++)
        acc[r] = 0.0;
    for (k = 0; k < d; k++) {
        for (r = 0; r < 4; r++) {
            double u = x[rows[r] * d + k];
            for (jj = 0; jj < 4; jj++) {
                acc[r * 8 + jj] = acc[r * 8 + jj] + u * q0[4 * k + jj];
                acc[r * 8 + 4 + jj] = acc[r * 8 + 4 + jj] + u * q1[4 * k + jj];
            }
        }
    }
    for (r = 0; r < 32; r++)
        out[r] = acc[r];
}

#ifdef ERSKIT_HAVE_AVX_PATH
__attribute__((target("avx")))
static void erskit_block_avx(const double *x, const double *P, ptrdiff_t d,
                             const ptrdiff_t rows[4], ptrdiff_t p, double out[32])
{
    const double *q0 = P + p * d * 4;
    const double *q1 = q0 + d * 4;
    const double *x0 = x + rows[0] * d, *x1 = x + rows[1] * d;
    const double *x2 = x + rows[2] * d, *x3 = x + rows[3] * d;
    __m256d a00 = _mm256_setzero_pd(), a01 = _mm256_setzero_pd();
    __m256d a10 = _mm256_setzero_pd(), a11 = _mm256_setzero_pd();
    __m256d a20 = _mm256_setzero_pd(), a21 = _mm256_setzero_pd();
    __m256d a30 = _mm256_setzero_pd(), a31 = _mm256_setzero_pd();
    ptrdiff_t k;
    for (k = 0; k < d; k++) {
        __m256d c0 = _mm256_loadu_pd(q0 + 4 * k);
        __m256d c1 = _mm256_loadu_pd(q1 + 4 * k);
        __m256d u;
        u = _mm256_broadcast_sd(x0 + k);
        a00 = _mm256_add_pd(a00, _mm256_mul_pd(u, c0));
        a01 = _mm256_add_pd(a01, _mm256_mul_pd(u, c1));
        u = _mm256_broadcast_sd(x1 + k);
        a10 = _mm256_add_pd(a10, _mm256_mul_pd(u, c0));
        a11 = _mm256_add_pd(a11, _mm256_mul_pd(u, c1));
        u = _mm256_broadcast_sd(x2 + k);
        a20 = _mm256_add_pd(a20, _mm256_mul_pd(u, c0));
        a21 = _mm256_add_pd(a21, _mm256_mul_pd(u, c1));
        u = _mm256_broadcast_sd(x3 + k);
        a30 = _mm256_add_pd(a30, _mm256_mul_pd(u, c0));
        a31 = _mm256_add_pd(a31, _mm256_mul_pd(u, c1));
    }
    _mm256_storeu_pd(out + 0, a00);
    _mm256_storeu_pd(out + 4, a01);
    _mm256_storeu_pd(out + 8, a10);
    _mm256_storeu_pd(out + 12, a11);
    _mm256_storeu_pd(out + 16, a20);
    _mm256_storeu_pd(out + 20, a21);
    _mm256_storeu_pd(out + 24, a30);
    _mm256_storeu_pd(out + 28, a31);
}

static int erskit_use_avx(void)
{
    static int cached = -1;
    if (cached < 0) {
        __builtin_cpu_init();
        cached = __builtin_cpu_supports("avx") ? 1 : 0;
    }
    return cached;
}
#else
static int erskit_use_avx(void) { return 0; }
#endif

/* 4 x 8 block of dot products: rows[r] against columns 4p .. 4p + 7. */
static void erskit_dot_block(const double *x, const double *P, ptrdiff_t d,
                             const ptrdiff_t rows[4], ptrdiff_t p, int avx, double out[32])
{
#ifdef ERSKIT_HAVE_AVX_PATH
    if (avx) {
        erskit_block_avx(x, P, d, rows, p, out);
        return;
    }
#endif
    (void)avx;
    erskit_block_portable(x, P, d, rows, p, out);
}

#endif
