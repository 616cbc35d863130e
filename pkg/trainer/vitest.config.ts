import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    testTimeout: 600_000,
    hookTimeout: 120_000,
    // tfjs keeps global state (backend, weight registries); one process
    // avoids cross-file interference and keeps runs deterministic
    pool: "forks",
    poolOptions: { forks: { singleFork: true } },
  },
});
