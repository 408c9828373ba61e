import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "happy-dom",
    include: ["test/**/*.test.ts"],
    // the integration test builds a synthetic run and boots the real service
    testTimeout: 30_000,
    hookTimeout: 180_000,
  },
});
