import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    testTimeout: 120_000, // the scripted session drives a real service
    hookTimeout: 240_000,
  },
});
