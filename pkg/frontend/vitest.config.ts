import { defineConfig } from "vitest/config";

// each handle spawns a Python subprocess; give slow CI machines headroom
export default defineConfig({
  test: {
    testTimeout: 180_000,
    hookTimeout: 180_000,
  },
});
