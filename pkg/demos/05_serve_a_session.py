"""Build a small session and serve it for the browser viewer.

Equivalent CLI:
    driftscope generate --flow double-gyre --grid 60x30 --domain 0,2,0,1 \
        --t0 0 --tau 6.283185307 --steps 50 --jitter 0.01 -o dg.ptrj
    driftscope build --input dg.ptrj --landmarks 500 --cache dg.dgem
    driftscope serve --input dg.ptrj --cache dg.dgem --port 8077

Then open frontend/index.html (or `npm run dev` there) pointed at
http://127.0.0.1:8077.
"""

import numpy as np

from driftscope import (
    FlowSpec,
    SessionState,
    build_diffusion_operator,
    build_landmark_kernel,
    compute_bandwidths,
    integrate_flow,
    select_landmarks,
    serve,
)


def main():
    spec = FlowSpec("double-gyre", grid=(60, 30), tau=2 * np.pi, T=50, jitter=0.01)
    ds = integrate_flow(spec)
    lm = select_landmarks(ds, 500, strategy="tfps", rng_seed=0, stride=5)
    emb = build_diffusion_operator(
        build_landmark_kernel(ds, lm, compute_bandwidths(ds, lm)), m=200
    )
    session = SessionState(ds, emb, rng_seed=0)
    port = 8077
    print(f"serving {ds.n} particles on http://127.0.0.1:{port} (Ctrl-C to stop)")
    serve(session, port)


if __name__ == "__main__":
    main()
