import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

export function loadShell(): void {
  const html = readFileSync(
    join(dirname(fileURLToPath(import.meta.url)), "..", "index.html"),
    "utf-8",
  );
  const body = html.match(/<body>([\s\S]*)<\/body>/)![1]
    .replace(/<script[\s\S]*?<\/script>/g, "");
  document.body.innerHTML = body;
  // jsdom has no 2d canvas and logs "Not implemented" per call; the charts
  // already skip when no context exists
  (HTMLCanvasElement.prototype as unknown as { getContext: () => null }).getContext =
    () => null;
}
