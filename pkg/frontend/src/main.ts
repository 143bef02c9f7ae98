import { createApp } from "./app";

const app = createApp(document);
void app.start();

// expose for debugging from the browser console
(window as unknown as { leafctl: unknown }).leafctl = app;
