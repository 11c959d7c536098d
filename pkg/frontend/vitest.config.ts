import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    include: ["tests/**/*.test.ts"],
    testTimeout: 120_000,
    hookTimeout: 120_000,
    // the live-service test and unit tests share one worker to keep the
    // sandbox footprint small
    pool: "threads",
    poolOptions: { threads: { singleThread: true } },
  },
});
