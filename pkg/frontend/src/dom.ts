import type { DashboardModel, RenderState } from "./model.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

const BANNER_TONES: Record<string, string> = {
  continue: "banner-continue",
  stop_target_reached: "banner-success",
  stop_futility: "banner-futility",
  stop_at_max: "banner-cap",
};

function fmt(value: number | null, digits = 4): string {
  return value === null ? "–" : value.toFixed(digits);
}

/** Trajectory polyline plus threshold line and prediction fan, as SVG. */
function chartSvg(state: RenderState): string {
  const width = 560;
  const height = 240;
  const pad = 30;
  const nMax = Math.max(state.trajectory.length + 5, 50);
  const values = state.trajectory.map(([, cil]) => cil);
  if (state.threshold !== null) values.push(state.threshold);
  if (state.fan !== null) values.push(state.fan.maximum, state.fan.minimum);
  const top = Math.max(...values, 0.1) * 1.15;
  const x = (i: number) => pad + ((width - 2 * pad) * i) / nMax;
  const y = (v: number) => height - pad - ((height - 2 * pad) * v) / top;
  const parts: string[] = [];
  parts.push(`<rect width="${width}" height="${height}" fill="#fcfcf9"/>`);
  if (state.threshold !== null) {
    const ty = y(state.threshold);
    parts.push(
      `<line x1="${pad}" y1="${ty}" x2="${width - pad}" y2="${ty}" stroke="#b04632" stroke-dasharray="6 3"/>`,
      `<text x="${width - pad}" y="${ty - 4}" text-anchor="end" font-size="10" fill="#b04632">target</text>`,
    );
  }
  if (state.trajectory.length > 0) {
    const points = state.trajectory.map(([i, cil]) => `${x(i)},${y(cil)}`).join(" ");
    parts.push(`<polyline points="${points}" fill="none" stroke="#2b547e" stroke-width="1.5"/>`);
  }
  if (state.fan !== null) {
    const fx = x(nMax);
    parts.push(
      `<line x1="${fx}" y1="${y(state.fan.minimum)}" x2="${fx}" y2="${y(state.fan.maximum)}" stroke="#7b9e87" stroke-width="6" opacity="0.5"/>`,
      `<circle cx="${fx}" cy="${y(state.fan.median)}" r="3" fill="#7b9e87"/>`,
      `<circle cx="${fx}" cy="${y(state.fan.tlPercentile)}" r="3" fill="#b08d3e"/>`,
    );
  }
  parts.push(
    `<line x1="${pad}" y1="${height - pad}" x2="${width - pad}" y2="${height - pad}" stroke="#444"/>`,
    `<line x1="${pad}" y1="${pad}" x2="${pad}" y2="${height - pad}" stroke="#444"/>`,
  );
  return `<svg viewBox="0 0 ${width} ${height}" role="img" aria-label="CIL trajectory">${parts.join("")}</svg>`;
}

export function bind(model: DashboardModel): () => void {
  const render = () => {
    const state = model.renderState();

    el("setup-panel").hidden = state.phase !== "setup";
    el("session-panel").hidden = state.phase !== "session";
    el("service-down").hidden = !state.serviceDown;

    if (state.phase === "setup") {
      for (const [field, value] of Object.entries(state.form)) {
        const input = document.getElementById(`form-${field}`) as HTMLInputElement | null;
        if (input !== null && input.value !== value) input.value = value;
      }
      for (const node of document.querySelectorAll<HTMLElement>("[data-error-for]")) {
        const field = node.dataset.errorFor ?? "";
        node.textContent = state.formErrors[field] ?? "";
      }
      return;
    }

    el("session-id").textContent = state.sessionId ?? "";
    el("session-count").textContent = String(state.count);
    const banner = el("banner");
    banner.textContent = state.banner?.label ?? "";
    banner.className = `banner ${BANNER_TONES[state.banner?.kind ?? "continue"]}`;
    el("chart").innerHTML = chartSvg(state);

    const fan = state.fan;
    el("fan-summary").textContent =
      fan === null
        ? "no prediction yet"
        : `predicted CIL at cap — min ${fmt(fan.minimum)}, median ${fmt(fan.median)}, ` +
          `tolerance percentile ${fmt(fan.tlPercentile)}, max ${fmt(fan.maximum)} ` +
          `(${fan.calibrated ? "calibrated" : "uncalibrated"}, from ${fan.atCount} samples)`;
    el("gauge").textContent = state.successProb === null ? "–" : `${(state.successProb * 100).toFixed(1)}%`;

    const entry = el<HTMLInputElement>("obs-input");
    const entryButton = el<HTMLButtonElement>("obs-submit");
    entry.disabled = !state.entryEnabled;
    entryButton.disabled = !state.entryEnabled;
    el("entry-notice").textContent = state.entryNotice ?? "";
    el("entry-error").textContent = state.entryError ?? (state.entryEnabled ? "" : "session stopped — entries disabled");

    const whatIfPanel = el("whatif-panel");
    whatIfPanel.title = state.whatIf.disabledReason ?? "";
    el<HTMLInputElement>("whatif-tl").disabled = !state.whatIf.enabled;
    el<HTMLInputElement>("whatif-threshold").disabled = !state.whatIf.enabled;
    el("whatif-tl-value").textContent = state.whatIf.tl;
    const preview = state.whatIf.preview;
    el("whatif-result").textContent =
      preview === null
        ? state.whatIf.disabledReason ?? state.whatIf.error ?? ""
        : `preview: ${preview.kind === "continue" ? "Continue" : "Futility"} ` +
          `(reach probability ${(preview.success_prob * 100).toFixed(1)}%)` +
          (state.whatIf.matchesCommitted ? " — matches committed settings" : "");
    el("whatif-error").textContent = state.whatIf.error ?? "";
  };

  let debounce: ReturnType<typeof setTimeout> | undefined;
  const schedulePreview = () => {
    clearTimeout(debounce);
    debounce = setTimeout(() => {
      void model.previewWhatIf().then(render);
    }, 250);
  };

  el("preset-fcw").addEventListener("click", () => {
    model.applyFcwPreset();
    render();
  });
  for (const input of document.querySelectorAll<HTMLInputElement>("#setup-panel input[data-field]")) {
    input.addEventListener("input", () => {
      model.setFormField(input.dataset.field as never, input.value);
    });
  }
  el("create-session").addEventListener("click", () => {
    void model.createSession().then(render);
  });
  el("obs-submit").addEventListener("click", () => {
    const input = el<HTMLInputElement>("obs-input");
    void model.submitObservations(input.value).then((decision) => {
      if (decision !== null) input.value = "";
      render();
    });
  });
  el<HTMLInputElement>("whatif-tl").addEventListener("input", (event) => {
    model.whatIfTl = (event.target as HTMLInputElement).value;
    el("whatif-tl-value").textContent = model.whatIfTl;
    schedulePreview();
  });
  el<HTMLInputElement>("whatif-threshold").addEventListener("input", (event) => {
    model.whatIfThreshold = (event.target as HTMLInputElement).value;
    schedulePreview();
  });

  render();
  return render;
}
