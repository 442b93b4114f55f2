// DOM wiring: six joint sliders, gripper toggle, canvas, HUD.

import { ConsoleClient } from "./client.js";
import { DEFAULT_LAYOUT, detectionAt, paint, renderView } from "./render.js";
import { GRIP, JOINTS } from "./wire.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
canvas.width = DEFAULT_LAYOUT.width;
canvas.height = DEFAULT_LAYOUT.height;
const ctx = canvas.getContext("2d")!;

const wsUrl = `ws://${location.host}/ws`;
const client = new ConsoleClient(wsUrl);

const slidersDiv = document.getElementById("sliders")!;
const sliderInputs: HTMLInputElement[] = [];
JOINTS.forEach((joint, index) => {
  const row = document.createElement("div");
  row.className = "slider-row";
  const label = document.createElement("label");
  label.textContent = joint;
  const input = document.createElement("input");
  input.type = "range";
  input.min = "0";
  input.max = "180";
  input.step = "1";
  input.value = "0";
  const value = document.createElement("span");
  value.textContent = "0";
  input.addEventListener("input", () => {
    value.textContent = input.value;
    client.command(index, joint, Number(input.value));
  });
  row.append(label, input, value);
  slidersDiv.append(row);
  sliderInputs.push(input);
});

const gripButton = document.getElementById("grip") as HTMLButtonElement;
gripButton.addEventListener("click", () => {
  const closing = !client.state.gripClosed;
  client.command(-1, GRIP, closing ? 180 : 0);
  gripButton.textContent = closing ? "open gripper" : "close gripper";
});

canvas.addEventListener("click", (event) => {
  const rect = canvas.getBoundingClientRect();
  const hit = detectionAt(client.state,
                          event.clientX - rect.left, event.clientY - rect.top);
  client.state = { ...client.state, highlightedDetection: hit };
  repaint();
});

function repaint(): void {
  paint(ctx, renderView(client.state));
  // sliders snap back when a command is rejected
  client.state.sliders.forEach((v, i) => {
    if (Number(sliderInputs[i].value) !== v) {
      sliderInputs[i].value = String(v);
      const label = sliderInputs[i].nextElementSibling as HTMLElement;
      if (label) label.textContent = String(Math.round(v));
    }
  });
  gripButton.textContent = client.state.gripClosed ? "open gripper" : "close gripper";
}

client.onChange = repaint;
client.connect();
repaint();
