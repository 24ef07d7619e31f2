import { ApiClient } from "./api.js";
import { ExplorerStore } from "./store.js";
import { renderControls, renderState } from "./ui.js";

async function boot() {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app root");
  const api = new ApiClient("");
  const store = new ExplorerStore(api);
  const schema = await store.init();
  renderControls(root.querySelector("#controls") as HTMLElement, schema, store);
  store.subscribe((state) => renderState(root, state, store));
  await store.refresh();
}

void boot();
