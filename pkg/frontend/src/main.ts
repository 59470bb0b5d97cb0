import { App } from './app';

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get('api') ?? 'http://127.0.0.1:8008';
const runId = params.get('run') ?? 'run1';
const annotator = params.get('annotator') ?? 'anonymous';

const root = document.getElementById('app');
if (!root) throw new Error('missing #app mount point');

const app = new App(root, { baseUrl, runId, annotator });
app.start();
