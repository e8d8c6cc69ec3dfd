/**
 * Opt-in integration test against a real running service:
 *
 *   viewsynth serve --checkpoint runs/model.npz --port 8000 &
 *   VIEWER_SERVER_URL=http://127.0.0.1:8000 npx vitest run test/live.test.ts
 */

import { describe, expect, it } from "vitest";

import { ViewerClient } from "../src/client.js";
import { FrameMessage } from "../src/protocol.js";

const SERVER = process.env.VIEWER_SERVER_URL;

// minimal valid 1x1 PNG for the session upload
const PNG = Uint8Array.from(
  atob(
    "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAAAAAA6fptVAAAACklEQVR4nGNiAAAABgADNjd8qAAAAABJRU5ErkJggg==",
  ),
  (c) => c.charCodeAt(0),
);

describe.skipIf(!SERVER)("live service", () => {
  it("streams frames with sub-250ms motion-to-photon latency", async () => {
    const client = new ViewerClient(SERVER!, {
      socketFactory: (url) => new WebSocket(url) as never,
      now: () => performance.now(),
    });
    const stats = await client.connect();
    expect(stats.p_min).toHaveLength(6);
    await client.uploadImage(PNG);

    const frames: Array<{ frame: FrameMessage; latency: number }> = [];
    client.onFrame = (frame, latency) => frames.push({ frame, latency });
    const mid = stats.p_min.map((lo, i) => (lo + stats.p_max[i]) / 2);
    client.sendPose({
      x: mid[0], y: mid[1], z: mid[2], yaw: mid[3], pitch: mid[4], roll: mid[5],
    });
    const t0 = Date.now();
    while (frames.length === 0 && Date.now() - t0 < 5000) {
      await new Promise((r) => setTimeout(r, 5));
    }
    expect(frames.length).toBeGreaterThan(0);
    expect(frames[0].latency).toBeLessThan(250);
    client.disconnect();
  }, 20000);
});
