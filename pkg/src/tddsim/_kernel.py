"""Compiled slot loop, a line-for-line twin of ``Realization.run_slot``.

It mutates the realization's own arrays in place and consumes the same
pre-drawn uniforms/exponentials the numpy loop would draw, so both paths give
the same trajectory. Interference sums use a different summation order, so
SIR values agree to rounding, not bit for bit.
"""
import math

import numpy as np
from numba import njit

STDD, DTDD_FIXED, DTDD_MWU = 0, 1, 2


@njit(cache=True)
def _pop(buf, head, tail, deliv, dsum, q, t):
    stamp = buf[q, head[q]]
    head[q] += 1
    delay = t - stamp + 1
    deliv[q] += 1
    dsum[q] += delay
    return stamp, delay


@njit(cache=True)
def run_block(t0, n_slots, horizon, warmup,
              scheme, eta_s, eta_d, delta, rho, eta_sharp, theta, literal, p_sap, p_ue,
              xi_ul, xi_dl,
              sched_first, sched_count, link_sap, n_saps, gain,
              sel_u, dir_u, aul, adl, fade, fade_pos,
              ul_buf, ul_head, ul_tail, ul_deliv, ul_dsum,
              dl_buf, dl_head, dl_tail, dl_deliv, dl_dsum,
              w_ul, w_dl,
              mu_arr, mu_del, mu_dsum, mu_empty,
              md_arr, md_del, md_dsum, md_empty):
    """Advance up to ``n_slots`` slots from ``t0``.

    Returns ``(slots_done, fade_pos)``; stops early, before touching any state
    of the slot, when the fade buffer cannot cover the next slot.
    """
    n_sched = sched_first.shape[0]
    n_links = ul_head.shape[0]
    link = np.empty(n_sched, np.int64)
    is_dl = np.empty(n_sched, np.bool_)
    qsel = np.empty(n_sched, np.int64)
    tx = np.empty(n_sched, np.int64)
    rx = np.empty(n_sched, np.int64)
    on_idx = np.empty(n_sched, np.int64)
    sir_sel = np.zeros(n_sched)

    for b in range(n_slots):
        t = t0 + b
        # (1) selection, (2) direction, (3) activation
        if scheme == STDD:
            stdd_dl = dir_u[b, 0] < eta_s
        n_on = 0
        for k in range(n_sched):
            l = sched_first[k] + np.int64(math.floor(sel_u[b, k] * sched_count[k]))
            link[k] = l
            if scheme == STDD:
                d = stdd_dl
            elif scheme == DTDD_FIXED:
                d = dir_u[b, k] < eta_d
            else:
                d = dir_u[b, k] < w_dl[l] / (w_ul[l] + w_dl[l])
            is_dl[k] = d
            if d:
                qsel[k] = dl_tail[l] - dl_head[l]
            else:
                qsel[k] = ul_tail[l] - ul_head[l]
            if qsel[k] > 0:
                s = link_sap[l]
                if d:
                    tx[n_on] = s
                    rx[n_on] = n_saps + l
                else:
                    tx[n_on] = n_saps + l
                    rx[n_on] = s
                on_idx[n_on] = k
                n_on += 1
        if fade_pos + n_on * n_on > fade.shape[0]:
            return b, fade_pos

        if t >= warmup:
            for l in range(n_links):
                if ul_tail[l] == ul_head[l]:
                    mu_empty[l] += 1
                if dl_tail[l] == dl_head[l]:
                    md_empty[l] += 1

        # (4) SIR and (5) ACK/NACK
        for k in range(n_sched):
            sir_sel[k] = 0.0
        for i in range(n_on):
            ki = on_idx[i]
            ul_rx = not is_dl[ki]
            desired = 0.0
            interference = 0.0
            for j in range(n_on):
                kj = on_idx[j]
                p = p_sap if is_dl[kj] else p_ue
                if literal and ul_rx and (not is_dl[kj]) and j != i:
                    p = p_sap
                r = gain[rx[i], tx[j]] * fade[fade_pos + i * n_on + j] * p
                if j == i:
                    desired = r
                else:
                    interference += r
            sir = desired / interference if interference > 0 else np.inf
            sir_sel[ki] = sir
            if sir >= theta:
                l = link[ki]
                if is_dl[ki]:
                    stamp, delay = _pop(dl_buf, dl_head, dl_tail, dl_deliv, dl_dsum, l, t)
                    if stamp >= warmup:
                        md_del[l] += 1
                        md_dsum[l] += delay
                else:
                    stamp, delay = _pop(ul_buf, ul_head, ul_tail, ul_deliv, ul_dsum, l, t)
                    if stamp >= warmup:
                        mu_del[l] += 1
                        mu_dsum[l] += delay
        fade_pos += n_on * n_on

        # (6) MWU feedback
        if scheme == DTDD_MWU:
            for k in range(n_sched):
                l = link[k]
                q = qsel[k]
                if q > 0:
                    m = theta - sir_sel[k] * (-math.expm1(-eta_sharp * q))
                else:
                    m = theta
                x = min(max(m, -rho), rho) / rho
                f = (1.0 - delta) ** x if x >= 0 else (1.0 + delta) ** (-x)
                wu = w_ul[l]
                wd = w_dl[l]
                if is_dl[k]:
                    wd = wd * f
                else:
                    wu = wu * f
                scale = 2.0 / (wu + wd)
                w_ul[l] = max(wu * scale, 2.2250738585072014e-308)
                w_dl[l] = max(wd * scale, 2.2250738585072014e-308)

        # (7) arrivals for the next slot
        stamp = t + 1
        counted = warmup <= stamp < horizon
        for l in range(n_links):
            if aul[b, l] < xi_ul:
                ul_buf[l, ul_tail[l]] = stamp
                ul_tail[l] += 1
                if counted:
                    mu_arr[l] += 1
            if adl[b, l] < xi_dl:
                dl_buf[l, dl_tail[l]] = stamp
                dl_tail[l] += 1
                if counted:
                    md_arr[l] += 1
    return n_slots, fade_pos
