import os
import time
from typing import Any, Dict, List

import pandas as pd
import requests
import streamlit as st

# ==========================================================
# CONFIGURATION
# ==========================================================
BACKEND_URL = os.getenv("BACKEND_URL", "http://127.0.0.1:8000")
RUNS_EP = f"{BACKEND_URL}/runs"
PRESETS_EP = f"{BACKEND_URL}/presets"
HEALTH_EP = f"{BACKEND_URL}/health"

st.set_page_config(page_title="DISCERN runs", page_icon="🎯", layout="wide")


# ==========================================================
# HELPER FUNCTIONS
# ==========================================================
def ping_health() -> Dict[str, Any]:
    """Check the /health endpoint and measure latency."""
    try:
        t0 = time.time()
        r = requests.get(HEALTH_EP, timeout=5)
        latency = round((time.time() - t0) * 1000, 1)
        if r.ok:
            data = r.json()
            data["latency_ms"] = latency
            return data
        return {"ok": False, "error": f"{r.status_code}: {r.text}"}
    except Exception as e:
        return {"ok": False, "error": str(e)}


def get_json(url: str) -> Any:
    try:
        r = requests.get(url, timeout=10)
        if r.ok:
            return r.json()
        return {"_error": f"{r.status_code} {r.text}"}
    except Exception as e:
        return {"_error": str(e)}


def post_json(url: str, payload: Dict[str, Any]) -> Dict[str, Any]:
    try:
        r = requests.post(url, json=payload, timeout=60)
        if r.ok:
            return r.json()
        return {"_error": f"{r.status_code} {r.text}"}
    except Exception as e:
        return {"_error": str(e)}


def metrics_frame(rows: List[Dict[str, Any]]) -> pd.DataFrame:
    df = pd.DataFrame(rows)
    return df.set_index("frames") if not df.empty else df


# ==========================================================
# SIDEBAR: health + launch
# ==========================================================
st.sidebar.title("⚙️ Settings")

with st.sidebar:
    st.caption("Backend Health")
    health = ping_health()
    if health.get("ok"):
        st.success(f"Healthy • {health['latency_ms']} ms • {health.get('runs', 0)} runs")
    else:
        st.error(f"Unhealthy: {health.get('error', 'unknown')}")

    st.caption("Start a run")
    presets = get_json(PRESETS_EP)
    names = sorted(presets.get("presets", {})) if "_error" not in presets else []
    with st.form("launch"):
        preset = st.selectbox("Preset", names) if names else None
        run_name = st.text_input("Run name (optional)")
        seed = st.number_input("Seed", value=0, step=1)
        frames = st.number_input("Frames", value=200_000, step=10_000, min_value=1)
        launched = st.form_submit_button("Launch", use_container_width=True)
    if launched and preset:
        res = post_json(RUNS_EP, {"preset": preset, "name": run_name or None, "seed": int(seed),
                                  "frames": int(frames)})
        if "_error" in res:
            st.error(res["_error"])
        else:
            st.success(f"Started {res['run_id']}")

    refresh = st.toggle("Auto-refresh (10 s)", value=False)

# ==========================================================
# MAIN: runs and curves
# ==========================================================
st.title("🎯 DISCERN runs")

runs = get_json(RUNS_EP)
if isinstance(runs, dict) and "_error" in runs:
    st.error(f"Backend error: {runs['_error']}")
    st.stop()
if not runs:
    st.info("No runs yet. Launch one from the sidebar.")
    st.stop()

st.dataframe(
    pd.DataFrame([{k: r[k] for k in ("run_id", "state", "frames", "out_dir", "error")} for r in runs]),
    use_container_width=True,
    hide_index=True,
)

selected = st.multiselect("Compare runs", [r["run_id"] for r in runs], default=[runs[-1]["run_id"]])
chosen = [r for r in runs if r["run_id"] in selected and r["metrics"]]

if chosen:
    st.subheader("Goal achievement")
    curves = pd.concat(
        {r["run_id"]: metrics_frame(r["metrics"])["achievement_overall"] for r in chosen}, axis=1
    )
    st.line_chart(curves)

    st.subheader("Per-dimension achievement")
    for r in chosen:
        df = metrics_frame(r["metrics"])
        dims = [c for c in df.columns if c.startswith("achievement_dim_")]
        st.caption(r["run_id"])
        st.line_chart(df[dims])

    with st.expander("Losses"):
        for r in chosen:
            df = metrics_frame(r["metrics"])
            st.caption(r["run_id"])
            st.line_chart(df[["td_loss", "disc_loss", "mean_reward"]])
else:
    st.info("Selected runs have no evaluation rows yet.")

if refresh:
    time.sleep(10)
    st.rerun()
