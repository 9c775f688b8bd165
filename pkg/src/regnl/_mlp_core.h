/* Fused elementwise passes of one full-batch training epoch.
 *
 * Activations are row-major (rows x width). Dropout lanes follow the
 * splitmix64 counter stream shared with the Python fallback: element e of a
 * layer reads 16-bit lane (e & 3) of word splitmix(key + (e >> 2)).
 */
#ifndef REGNL_MLP_CORE_H
#define REGNL_MLP_CORE_H

#include <math.h>
#include <stddef.h>
#include <stdint.h>

/* Bodies are force-inlined at call sites with literal widths (16 for the
 * hidden layers) so loop bounds and strides become compile-time constants. */
#define REGNL_INLINE static inline __attribute__((always_inline))
/* Entry points stay out of line: inlined into a large caller, the restrict
 * qualifiers on their parameters are lost and GCC must assume that the
 * small bias/gradient vectors alias the streamed row buffers. */
#define REGNL_KERNEL static __attribute__((noinline))

/* GCC/Clang vector extension: lowered to AVX-512, AVX2 or SSE as available.
 * aligned(8) makes plain dereferences valid unaligned loads and stores. */
typedef double regnl_v8 __attribute__((vector_size(64), aligned(8)));
typedef long long regnl_m8 __attribute__((vector_size(64), aligned(8)));

/* 1.0 when lane >= thr else 0.0, without a data-dependent branch */
static inline double regnl_keep(uint64_t lane, unsigned int thr)
{
    int64_t diff = (int64_t)thr - 1 - (int64_t)lane;
    return (double)((uint64_t)diff >> 63);
}

static inline uint64_t regnl_splitmix(uint64_t x)
{
    uint64_t z = x + 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

REGNL_INLINE void regnl_bias_relu16(double *restrict z, ptrdiff_t n, const double *restrict b)
{
    for (ptrdiff_t i = 0; i < n; i++) {
        double *restrict zi = z + i * 16;
        for (ptrdiff_t o = 0; o < 16; o++) {
            double v = zi[o] + b[o];
            zi[o] = v > 0.0 ? v : 0.0;
        }
    }
}

/* z = relu(z + b) * dropout, in place */
REGNL_KERNEL void regnl_bias_relu_dropout(double *restrict z, ptrdiff_t n, ptrdiff_t width,
                                    const double *restrict b, uint64_t key,
                                    unsigned int thr, double scale)
{
    if (thr == 0) {
        if (width == 16) {
            regnl_bias_relu16(z, n, b);
            return;
        }
        for (ptrdiff_t i = 0; i < n; i++) {
            double *restrict zi = z + i * width;
            for (ptrdiff_t o = 0; o < width; o++) {
                double v = zi[o] + b[o];
                zi[o] = v > 0.0 ? v : 0.0;
            }
        }
        return;
    }
    double mult[64];
    for (ptrdiff_t i = 0; i < n; i++) {
        double *restrict zi = z + i * width;
        for (ptrdiff_t o0 = 0; o0 < width; o0 += 64) {
            ptrdiff_t len = width - o0 < 64 ? width - o0 : 64;
            ptrdiff_t e = i * width + o0;
            ptrdiff_t t = 0;
            /* lanes are consumed four per word; start mid-word if unaligned */
            while (t < len) {
                uint64_t word = regnl_splitmix(key + (uint64_t)(e >> 2));
                int lane = (int)(e & 3);
                if (lane == 0 && t + 4 <= len) {
                    mult[t] = scale * regnl_keep(word & 0xFFFF, thr);
                    mult[t + 1] = scale * regnl_keep((word >> 16) & 0xFFFF, thr);
                    mult[t + 2] = scale * regnl_keep((word >> 32) & 0xFFFF, thr);
                    mult[t + 3] = scale * regnl_keep(word >> 48, thr);
                    t += 4;
                    e += 4;
                    continue;
                }
                for (; lane < 4 && t < len; lane++, t++, e++)
                    mult[t] = scale * regnl_keep((word >> (16 * lane)) & 0xFFFF, thr);
            }
            for (t = 0; t < len; t++) {
                double v = zi[o0 + t] + b[o0 + t];
                zi[o0 + t] = (v > 0.0 ? v : 0.0) * mult[t];
            }
        }
    }
}

/* g = g * d(act)/dz, with the derivative recovered from the stored
 * activation (nonzero exactly where the unit fired and was kept); gb gets
 * the column sums of the masked g, i.e. the bias gradient of that layer. */
REGNL_INLINE void regnl_mask_grad_body(double *restrict g, const double *restrict act,
                                       ptrdiff_t n, ptrdiff_t width, double scale,
                                       double *restrict gb)
{
    for (ptrdiff_t o = 0; o < width; o++)
        gb[o] = 0.0;
    for (ptrdiff_t i = 0; i < n; i++) {
        double *restrict gi = g + i * width;
        const double *restrict ai = act + i * width;
        for (ptrdiff_t o = 0; o < width; o++) {
            double v = ai[o] > 0.0 ? gi[o] * scale : 0.0;
            gi[o] = v;
            gb[o] += v;
        }
    }
}

REGNL_KERNEL void regnl_mask_grad(double *restrict g, const double *restrict act,
                            ptrdiff_t n, ptrdiff_t width, double scale,
                            double *restrict gb)
{
    if (width == 16) {
        /* same per-element select as the body; gb lanes accumulate rows in order */
        const regnl_v8 zero = {0};
        regnl_v8 s0 = zero, s1 = zero;
        for (ptrdiff_t i = 0; i < n; i++) {
            regnl_v8 *restrict gi = (regnl_v8 *)(g + i * 16);
            const regnl_v8 *restrict ai = (const regnl_v8 *)(act + i * 16);
            regnl_v8 v0 = (regnl_v8)((regnl_m8)(gi[0] * scale) & (regnl_m8)(ai[0] > zero));
            regnl_v8 v1 = (regnl_v8)((regnl_m8)(gi[1] * scale) & (regnl_m8)(ai[1] > zero));
            gi[0] = v0;
            gi[1] = v1;
            s0 += v0;
            s1 += v1;
        }
        *(regnl_v8 *)gb = s0;
        *(regnl_v8 *)(gb + 8) = s1;
    } else
        regnl_mask_grad_body(g, act, n, width, scale, gb);
}

/* w -= lr * (gw + decay * w); b -= lr * gb; refresh the transposed copy */
REGNL_KERNEL void regnl_sgd_update(double *restrict w, double *restrict wt,
                             const double *restrict gw, double *restrict b,
                             const double *restrict gb, ptrdiff_t n_out,
                             ptrdiff_t n_in, double lr, double decay)
{
    for (ptrdiff_t o = 0; o < n_out; o++) {
        for (ptrdiff_t k = 0; k < n_in; k++) {
            ptrdiff_t j = o * n_in + k;
            w[j] -= lr * (gw[j] + decay * w[j]);
            wt[k * n_out + o] = w[j];
        }
        b[o] -= lr * gb[o];
    }
}


/* out (n x n_out) = a (n x n_in) @ m (n_in x n_out), all row-major.
 * Width-16 outputs take a register-blocked path over four rows at a time so
 * the multiply-add chains are independent. Every output element is summed
 * over k in increasing order on both paths. */
/* Four rows of a width-16 product; inlined with literal widths so the k loop
 * and the row strides are compile-time constants. */
REGNL_INLINE void regnl_rowmat16_rows(double *restrict out, const double *restrict a,
                                      const double *restrict m, ptrdiff_t n,
                                      ptrdiff_t n_in, ptrdiff_t *pi)
{
    ptrdiff_t i = *pi;
    for (; i + 4 <= n; i += 4) {
        const double *restrict a0 = a + i * n_in;
        regnl_v8 c00 = {0}, c01 = {0}, c10 = {0}, c11 = {0};
        regnl_v8 c20 = {0}, c21 = {0}, c30 = {0}, c31 = {0};
        for (ptrdiff_t k = 0; k < n_in; k++) {
            const regnl_v8 m0 = *(const regnl_v8 *)(m + k * 16);
            const regnl_v8 m1 = *(const regnl_v8 *)(m + k * 16 + 8);
            const double s0 = a0[k], s1 = a0[n_in + k];
            const double s2 = a0[2 * n_in + k], s3 = a0[3 * n_in + k];
            c00 += s0 * m0; c01 += s0 * m1;
            c10 += s1 * m0; c11 += s1 * m1;
            c20 += s2 * m0; c21 += s2 * m1;
            c30 += s3 * m0; c31 += s3 * m1;
        }
        double *restrict o0 = out + i * 16;
        *(regnl_v8 *)(o0) = c00; *(regnl_v8 *)(o0 + 8) = c01;
        *(regnl_v8 *)(o0 + 16) = c10; *(regnl_v8 *)(o0 + 24) = c11;
        *(regnl_v8 *)(o0 + 32) = c20; *(regnl_v8 *)(o0 + 40) = c21;
        *(regnl_v8 *)(o0 + 48) = c30; *(regnl_v8 *)(o0 + 56) = c31;
    }
    *pi = i;
}

REGNL_INLINE void regnl_rowmat_generic(double *restrict out, const double *restrict a,
                                       const double *restrict m, ptrdiff_t i, ptrdiff_t n,
                                       ptrdiff_t n_in, ptrdiff_t n_out)
{
    for (; i < n; i++) {
        const double *restrict ai = a + i * n_in;
        double *restrict oi = out + i * n_out;
        for (ptrdiff_t o = 0; o < n_out; o++)
            oi[o] = 0.0;
        for (ptrdiff_t k = 0; k < n_in; k++) {
            const double s = ai[k];
            const double *restrict mk = m + k * n_out;
            for (ptrdiff_t o = 0; o < n_out; o++)
                oi[o] += s * mk[o];
        }
    }
}

REGNL_KERNEL void regnl_rowmat(double *restrict out, const double *restrict a,
                         const double *restrict m, ptrdiff_t n, ptrdiff_t n_in,
                         ptrdiff_t n_out)
{
    ptrdiff_t i = 0;
    if (n_out == 16) {
        if (n_in == 16)
            regnl_rowmat16_rows(out, a, m, n, 16, &i);
        else if (n_in == 3)
            regnl_rowmat16_rows(out, a, m, n, 3, &i);
        else
            regnl_rowmat16_rows(out, a, m, n, n_in, &i);
        regnl_rowmat_generic(out, a, m, i, n, n_in, 16);
    } else if (n_out == 1 && n_in == 16) {
        regnl_rowmat_generic(out, a, m, 0, n, 16, 1);
    } else if (n_out == 3 && n_in == 16) {
        regnl_rowmat_generic(out, a, m, 0, n, 16, 3);
    } else {
        regnl_rowmat_generic(out, a, m, 0, n, n_in, n_out);
    }
}

/* gw (n_out x n_in) = g^T (n_out x n) @ a (n x n_in), summed over rows in
 * increasing order. Width-16 inputs keep blocks of eight gw rows in registers. */
REGNL_INLINE void regnl_outer_sum_body(double *restrict gw, const double *restrict g,
                                       const double *restrict a, ptrdiff_t n,
                                       ptrdiff_t n_out, ptrdiff_t n_in)
{
    ptrdiff_t o0 = 0;
    if (n_in == 16) {
        for (; o0 + 8 <= n_out; o0 += 8) {
            regnl_v8 acc[16];
            for (int j = 0; j < 16; j++)
                acc[j] = (regnl_v8){0};
            for (ptrdiff_t i = 0; i < n; i++) {
                const regnl_v8 a0 = *(const regnl_v8 *)(a + i * 16);
                const regnl_v8 a1 = *(const regnl_v8 *)(a + i * 16 + 8);
                const double *restrict gi = g + i * n_out + o0;
                for (int j = 0; j < 8; j++) {
                    acc[2 * j] += gi[j] * a0;
                    acc[2 * j + 1] += gi[j] * a1;
                }
            }
            for (int j = 0; j < 8; j++) {
                *(regnl_v8 *)(gw + (o0 + j) * 16) = acc[2 * j];
                *(regnl_v8 *)(gw + (o0 + j) * 16 + 8) = acc[2 * j + 1];
            }
        }
    }
    for (ptrdiff_t j = o0 * n_in; j < n_out * n_in; j++)
        gw[j] = 0.0;
    if (o0 == n_out)
        return;
    for (ptrdiff_t i = 0; i < n; i++) {
        const double *restrict gi = g + i * n_out;
        const double *restrict ai = a + i * n_in;
        for (ptrdiff_t o = o0; o < n_out; o++) {
            const double s = gi[o];
            double *restrict row = gw + o * n_in;
            for (ptrdiff_t k = 0; k < n_in; k++)
                row[k] += s * ai[k];
        }
    }
}

REGNL_KERNEL void regnl_outer_sum(double *restrict gw, const double *restrict g,
                            const double *restrict a, ptrdiff_t n, ptrdiff_t n_out,
                            ptrdiff_t n_in)
{
    if (n_out == 16 && n_in == 16)
        regnl_outer_sum_body(gw, g, a, n, 16, 16);
    else if (n_out == 16 && n_in == 3)
        regnl_outer_sum_body(gw, g, a, n, 16, 3);
    else if (n_out == 1 && n_in == 16)
        regnl_outer_sum_body(gw, g, a, n, 1, 16);
    else
        regnl_outer_sum_body(gw, g, a, n, n_out, n_in);
}

#endif
