/**
 * Browser entry point: wires the viewer client and pose controls to the DOM.
 *
 * Drag = x/y, wheel = z, right or ctrl drag = yaw/pitch, shift drag = roll;
 * sliders mirror all six components. Frames stream in over the WebSocket
 * with a latency overlay; input handling never waits on frame arrival.
 */

import { ViewerClient } from "./client.js";
import { PoseController, boundsFromStats } from "./controls.js";
import { FrameMessage, POSE_KEYS, Pose } from "./protocol.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

function fmt(v: number): string {
  return v.toFixed(4).replace(/0+$/, "0");
}

async function main(): Promise<void> {
  const serverInput = $<HTMLInputElement>("server-url");
  serverInput.value = localStorage.getItem("viewsynth-server") ?? window.location.origin;
  const banner = $("banner");
  const frameImg = $<HTMLImageElement>("frame");
  const overlay = $("overlay");
  const rangeFlag = $("range-flag");
  const sliders = new Map<keyof Pose, HTMLInputElement>();
  const readouts = new Map<keyof Pose, HTMLElement>();

  let client: ViewerClient | null = null;
  let controls: PoseController | null = null;
  let lastUrl: string | null = null;

  const showBanner = (text: string, isError: boolean) => {
    banner.textContent = text;
    banner.className = isError ? "banner error" : "banner";
    banner.style.display = text ? "block" : "none";
  };

  const pushPose = () => {
    if (!client || !controls || !client.state.sessionId) return;
    client.sendPose(controls.pose);
    rangeFlag.style.display = controls.outOfRange ? "inline" : "none";
    for (const k of POSE_KEYS) {
      sliders.get(k)!.value = String(controls.pose[k]);
      readouts.get(k)!.textContent = fmt(controls.pose[k]);
    }
  };

  const onFrame = (frame: FrameMessage, latencyMs: number) => {
    if (lastUrl) URL.revokeObjectURL(lastUrl);
    const bytes = Uint8Array.from(atob(frame.image_b64), (c) => c.charCodeAt(0));
    lastUrl = URL.createObjectURL(new Blob([bytes], { type: "image/png" }));
    frameImg.src = lastUrl;
    overlay.textContent =
      `inference ${frame.inference_ms.toFixed(1)} ms | ` +
      `motion-to-photon ${latencyMs.toFixed(0)} ms` +
      (frame.out_of_range ? " | extrapolating" : "");
  };

  const buildSliders = () => {
    const holder = $("sliders");
    holder.innerHTML = "";
    for (const k of POSE_KEYS) {
      const row = document.createElement("div");
      row.className = "slider-row";
      const label = document.createElement("label");
      label.textContent = k;
      const input = document.createElement("input");
      input.type = "range";
      input.min = String(controls!.bounds.min[k]);
      input.max = String(controls!.bounds.max[k]);
      input.step = String((controls!.span(k) || 1) / 200);
      input.value = String(controls!.pose[k]);
      input.addEventListener("input", () => {
        controls!.setComponent(k, Number(input.value));
        pushPose();
      });
      const value = document.createElement("span");
      value.textContent = fmt(controls!.pose[k]);
      row.append(label, input, value);
      holder.append(row);
      sliders.set(k, input);
      readouts.set(k, value);
    }
  };

  const connect = async () => {
    const base = serverInput.value.trim();
    localStorage.setItem("viewsynth-server", base);
    showBanner("connecting...", false);
    client?.disconnect();
    const keepPose = controls?.pose ?? null;
    client = new ViewerClient(base);
    client.onFrame = onFrame;
    client.onStatus = (status, error) => {
      if (status === "error") showBanner(`connection failed: ${error ?? "unknown"} (retry below)`, true);
      else if (status === "connected") showBanner("", false);
    };
    try {
      const stats = await client.connect();
      controls = new PoseController(boundsFromStats(stats), keepPose ?? undefined);
      buildSliders();
      $("model-info").textContent =
        `${stats.variant} @ ${stats.width}x${stats.height}, embedding ${stats.embedding_variant}`;
    } catch {
      // banner already shows the failure; the connect button doubles as retry
    }
  };

  $("connect").addEventListener("click", () => void connect());
  $("reset").addEventListener("click", () => {
    controls?.reset();
    pushPose();
  });

  $<HTMLInputElement>("file").addEventListener("change", async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file || !client) return;
    try {
      const session = await client.uploadImage(file);
      showBanner(session.resized ? "image resized to model resolution" : "", false);
      pushPose();
    } catch (err) {
      showBanner(String(err), true);
    }
  });

  // pointer steering over the frame area
  const stage = $("stage");
  let dragging = false;
  let mode: "plane" | "orbit" | "roll" = "plane";
  let lastX = 0;
  let lastY = 0;
  stage.addEventListener("contextmenu", (e) => e.preventDefault());
  stage.addEventListener("pointerdown", (e) => {
    dragging = true;
    mode = e.shiftKey ? "roll" : e.button === 2 || e.ctrlKey ? "orbit" : "plane";
    lastX = e.clientX;
    lastY = e.clientY;
    stage.setPointerCapture(e.pointerId);
  });
  stage.addEventListener("pointermove", (e) => {
    if (!dragging || !controls) return;
    const w = stage.clientWidth || 1;
    const dx = e.clientX - lastX;
    const dy = e.clientY - lastY;
    lastX = e.clientX;
    lastY = e.clientY;
    if (mode === "plane") controls.dragPlane(dx, dy, w);
    else if (mode === "orbit") controls.orbitDrag(dx, dy, w);
    else controls.rollDrag(dx, w);
    pushPose();
  });
  stage.addEventListener("pointerup", () => (dragging = false));
  stage.addEventListener("wheel", (e) => {
    if (!controls) return;
    e.preventDefault();
    controls.wheel(Math.sign(e.deltaY));
    pushPose();
  });

  await connect();
}

window.addEventListener("DOMContentLoaded", () => void main());
