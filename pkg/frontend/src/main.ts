import { App, KeyValueStorage } from "./ui.js";

function browserStorage(): KeyValueStorage {
  return {
    get: (k) => window.localStorage.getItem(k),
    set: (k, v) => window.localStorage.setItem(k, v),
  };
}

const app = new App({
  base: "",
  fetchFn: (...args) => window.fetch(...args),
  doc: document,
  storage: browserStorage(),
});

void app.start();
