import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterAll, describe, expect, it, vi } from "vitest";

import { main } from "../src/cli.js";

const GOLDEN = path.join(__dirname, "fixtures", "golden");
const tmpDirs: string[] = [];

function tmpDir(): string {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "chreport-cli-"));
  tmpDirs.push(dir);
  return dir;
}

afterAll(() => {
  for (const dir of tmpDirs) fs.rmSync(dir, { recursive: true, force: true });
});

describe("cli", () => {
  it("renders the requested subset and reports the files", () => {
    const out = tmpDir();
    const log = vi.spyOn(console, "log").mockImplementation(() => {});
    const code = main(["--input", GOLDEN, "--out", out,
                       "--figures", "corr_curve,filter_fan"]);
    log.mockRestore();
    expect(code).toBe(0);
    expect(fs.existsSync(path.join(out, "corr_curve.svg"))).toBe(true);
    expect(fs.existsSync(path.join(out, "filter_fan.svg"))).toBe(true);
    expect(fs.existsSync(path.join(out, "price_surface.svg"))).toBe(false);
  });

  it("exits 2 on schema errors", () => {
    const dir = tmpDir();
    fs.writeFileSync(path.join(dir, "corr_table.csv"), "rho,wrong\n0,1\n");
    const err = vi.spyOn(console, "error").mockImplementation(() => {});
    const code = main(["--input", dir, "--out", tmpDir(),
                       "--figures", "corr_curve"]);
    expect(code).toBe(2);
    expect(err.mock.calls.flat().join(" ")).toMatch(/missing columns/);
    err.mockRestore();
  });

  it("exits 1 on usage errors", () => {
    const err = vi.spyOn(console, "error").mockImplementation(() => {});
    expect(main(["--input", GOLDEN])).toBe(1);
    expect(main(["--input", GOLDEN, "--out", tmpDir(), "--format", "png"])).toBe(1);
    err.mockRestore();
  });

  it("writes an index-only report for --figures ''", () => {
    const out = tmpDir();
    const log = vi.spyOn(console, "log").mockImplementation(() => {});
    const code = main(["--input", GOLDEN, "--out", out, "--figures", ""]);
    log.mockRestore();
    expect(code).toBe(0);
    expect(fs.existsSync(path.join(out, "index.html"))).toBe(true);
  });
});
