import { defineConfig } from "vitest/config";

export default defineConfig({
    test: {
        include: ["test/**/*.test.ts"],
        // tests spawn a real simulator process and render frames
        testTimeout: 120_000,
        hookTimeout: 120_000,
    },
});
